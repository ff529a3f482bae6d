"""Wire-compatible servo bus: packet codec, register files, device emulation.

Framing (protocol v1): FF FF | id | len | instruction | params... | checksum,
where len = number of params + 2 and the checksum is the bitwise complement
of the byte sum from id through the last param. Status packets reuse the
frame with the error byte in the instruction slot.

The emulated device is a quasi-static position servo: a proportional drive
torque k_t * p_gain * (goal - angle), scaled by bus voltage and saturated at
stall, balanced against an external load through Coulomb + viscous friction.
Inertia is neglected; within each step the angle is clamped at the
zero-velocity equilibrium so the model settles exactly instead of limit
cycling around it. The proportional gain is coerced into a configured
[floor, ceiling] band at write time, on the device itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import ServoSpec

__all__ = [
    "BROADCAST_ID",
    "INSTR_PING",
    "INSTR_READ",
    "INSTR_WRITE",
    "INSTR_SYNC_WRITE",
    "ADDR_TORQUE_ENABLE",
    "ADDR_P_GAIN",
    "ADDR_GOAL_POSITION",
    "ADDR_MOVING_SPEED",
    "ADDR_PRESENT_POSITION",
    "ADDR_PRESENT_SPEED",
    "ADDR_PRESENT_LOAD",
    "ADDR_PRESENT_VOLTAGE",
    "BusError",
    "ChecksumError",
    "IncompletePacket",
    "StatusError",
    "BusPacket",
    "encode_packet",
    "decode_packet",
    "scan_stream",
    "ticks_to_rad",
    "rad_to_ticks",
    "signed_magnitude_to_fraction",
    "fraction_to_signed_magnitude",
    "RegisterFile",
    "MotorConstants",
    "ServoDevice",
    "Bus",
    "read_packet",
    "write_packet",
    "sync_write_packet",
    "parse_status",
]

BROADCAST_ID = 254
MAX_PARAMS = 250

INSTR_PING = 0x01
INSTR_READ = 0x02
INSTR_WRITE = 0x03
INSTR_SYNC_WRITE = 0x83

ADDR_TORQUE_ENABLE = 24
ADDR_P_GAIN = 28
ADDR_GOAL_POSITION = 30
ADDR_MOVING_SPEED = 32
ADDR_PRESENT_POSITION = 36
ADDR_PRESENT_SPEED = 38
ADDR_PRESENT_LOAD = 40
ADDR_PRESENT_VOLTAGE = 42

REGISTER_SPACE = 48
_READ_ONLY = range(ADDR_PRESENT_POSITION, ADDR_PRESENT_VOLTAGE + 1)
# Byte-level writability: named control registers accept writes, gaps are
# reserved (writes tolerated and discarded, reads always 0).
_WRITABLE = {ADDR_TORQUE_ENABLE, ADDR_P_GAIN, ADDR_GOAL_POSITION, ADDR_GOAL_POSITION + 1,
             ADDR_MOVING_SPEED, ADDR_MOVING_SPEED + 1}
_RESERVED_WRITE_OK = {25, 26, 27, 29} | set(range(0, 24)) | set(range(34, 36)) | set(range(43, REGISTER_SPACE))

ERROR_INSTRUCTION = 0x40
ERROR_RANGE = 0x08


class BusError(Exception):
    pass


class ChecksumError(BusError):
    def __init__(self, offset: int):
        super().__init__(f"checksum mismatch in packet starting at byte {offset}")
        self.offset = offset


class IncompletePacket(BusError):
    def __init__(self, needed: int):
        super().__init__(f"need {needed} more byte(s) to finish the packet")
        self.needed = needed


class StatusError(BusError):
    def __init__(self, device_id: int, error: int, message: str = ""):
        detail = message or f"device {device_id} returned error flags 0x{error:02x}"
        super().__init__(detail)
        self.device_id = device_id
        self.error = error


@dataclass(frozen=True)
class BusPacket:
    id: int
    instruction: int
    params: bytes = b""


def _checksum(body: bytes) -> int:
    return ~sum(body) & 0xFF


def encode_packet(p: BusPacket) -> bytes:
    if not 0 <= p.id <= BROADCAST_ID:
        raise ValueError(f"device id must be 0..{BROADCAST_ID}, got {p.id}")
    if not 0 <= p.instruction <= 0xFF:
        raise ValueError(f"instruction must be one byte, got {p.instruction}")
    params = bytes(p.params)
    if len(params) > MAX_PARAMS:
        raise ValueError(f"params too long: {len(params)} > {MAX_PARAMS}")
    body = bytes([p.id, len(params) + 2, p.instruction]) + params
    return b"\xff\xff" + body + bytes([_checksum(body)])


def decode_packet(data: bytes, start: int = 0) -> tuple[BusPacket, int]:
    """Decode the first packet at or after `start`.

    Returns (packet, end_offset). Skips leading garbage until a FF FF
    preamble; raises ChecksumError (with the packet's start offset) or
    IncompletePacket (with the missing byte count).
    """
    view = bytes(data)
    pos = start
    while True:
        head = view.find(b"\xff\xff", pos)
        if head < 0:
            # No preamble yet; a trailing lone FF needs one byte, else two.
            raise IncompletePacket(1 if view[pos:].endswith(b"\xff") else 2)
        # A run of FF bytes: the real preamble is the last two before the id.
        idp = head + 2
        while idp < len(view) and view[idp] == 0xFF:
            idp += 1
        head = idp - 2
        if idp >= len(view):
            raise IncompletePacket(idp + 2 - len(view))
        dev_id = view[idp]
        if idp + 1 >= len(view):
            raise IncompletePacket(1)
        length = view[idp + 1]
        if dev_id > BROADCAST_ID or length < 2 or length > MAX_PARAMS + 2:
            pos = head + 2  # hopeless frame, resync past this preamble
            continue
        end = idp + 2 + length
        if end > len(view):
            raise IncompletePacket(end - len(view))
        body = view[idp : end - 1]
        if _checksum(body) != view[end - 1]:
            raise ChecksumError(head)
        return BusPacket(id=dev_id, instruction=view[idp + 2], params=bytes(view[idp + 3 : end - 1])), end


def scan_stream(data: bytes):
    """Walk arbitrary bytes, yielding (offset, BusPacket | ChecksumError).

    Never raises on garbage: checksum failures are yielded as values and
    scanning resumes past the offending preamble; a truncated tail ends the
    scan silently.
    """
    pos = 0
    n = len(data)
    while pos < n:
        try:
            packet, end = decode_packet(data, pos)
        except IncompletePacket:
            return
        except ChecksumError as err:
            yield err.offset, err
            pos = err.offset + 2
            continue
        head = data.find(b"\xff\xff", pos)
        yield head, packet
        pos = end


def ticks_to_rad(ticks: int, resolution: int = 4096) -> float:
    return (float(ticks) - resolution / 2) * (2.0 * math.pi / resolution)


def rad_to_ticks(theta: float, resolution: int = 4096) -> int:
    raw = int(round(theta / (2.0 * math.pi / resolution) + resolution / 2))
    return min(resolution - 1, max(0, raw))


def fraction_to_signed_magnitude(x: float) -> int:
    """Map [-1, 1] to the 10-bit signed-magnitude register form (bit 10 = positive)."""
    mag = min(1023, int(round(abs(x) * 1023)))
    return mag | (1 << 10) if x > 0 else mag


def signed_magnitude_to_fraction(raw: int) -> float:
    mag = (raw & 0x3FF) / 1023.0
    return mag if raw & (1 << 10) else -mag


@dataclass
class MotorConstants:
    k_t: float = 4.48  # N*m per gain unit per rad of error at nominal voltage
    mu_c: float = 0.02  # N*m Coulomb friction
    mu_v: float = 0.05  # N*m*s/rad viscous friction
    p_floor: int = 2
    p_ceiling: int = 128


class RegisterFile:
    """Byte-addressed control table with write-side coercion."""

    def __init__(self, constants: MotorConstants | None = None):
        self.constants = constants or MotorConstants()
        self._table = bytearray(REGISTER_SPACE)
        self.write(ADDR_P_GAIN, bytes([32]))
        self._set_u16(ADDR_GOAL_POSITION, 2048)
        self._set_u16(ADDR_PRESENT_POSITION, 2048)
        self._table[ADDR_PRESENT_VOLTAGE] = 148

    def _set_u16(self, addr: int, value: int):
        self._table[addr] = value & 0xFF
        self._table[addr + 1] = (value >> 8) & 0xFF

    def u16(self, addr: int) -> int:
        return self._table[addr] | (self._table[addr + 1] << 8)

    def u8(self, addr: int) -> int:
        return self._table[addr]

    def read(self, addr: int, count: int) -> bytes:
        if addr < 0 or count < 0 or addr + count > REGISTER_SPACE:
            raise StatusError(-1, ERROR_RANGE, f"read [{addr}, {addr + count}) outside the register space")
        return bytes(self._table[addr : addr + count])

    def write(self, addr: int, data: bytes):
        """Apply a write with per-register semantics (clamps, read-only traps)."""
        if addr < 0 or addr + len(data) > REGISTER_SPACE:
            raise StatusError(-1, ERROR_RANGE, f"write [{addr}, {addr + len(data)}) outside the register space")
        for offset in range(len(data)):
            if addr + offset in _READ_ONLY:
                raise StatusError(-1, ERROR_INSTRUCTION, f"register {addr + offset} is read-only")
        staged = bytearray(self._table)
        for offset, value in enumerate(data):
            a = addr + offset
            if a in _WRITABLE:
                staged[a] = value
            # Reserved bytes: accept and discard.
        # Register-level coercion after the byte image is assembled.
        c = self.constants
        staged[ADDR_P_GAIN] = min(c.p_ceiling, max(c.p_floor, staged[ADDR_P_GAIN]))
        goal = staged[ADDR_GOAL_POSITION] | (staged[ADDR_GOAL_POSITION + 1] << 8)
        goal = min(4095, goal)
        staged[ADDR_GOAL_POSITION] = goal & 0xFF
        staged[ADDR_GOAL_POSITION + 1] = (goal >> 8) & 0xFF
        speed = staged[ADDR_MOVING_SPEED] | (staged[ADDR_MOVING_SPEED + 1] << 8)
        speed = min(1023, speed)
        staged[ADDR_MOVING_SPEED] = speed & 0xFF
        staged[ADDR_MOVING_SPEED + 1] = (speed >> 8) & 0xFF
        staged[ADDR_TORQUE_ENABLE] = 1 if staged[ADDR_TORQUE_ENABLE] else 0
        self._table = staged


class ServoDevice:
    """One emulated actuator: a register file plus the quasi-static motor."""

    def __init__(self, device_id: int, spec: ServoSpec | None = None, constants: MotorConstants | None = None):
        self.id = device_id
        self.spec = spec or ServoSpec()
        self.constants = constants or MotorConstants()
        self.registers = RegisterFile(self.constants)
        self.angle = 0.0  # continuous shaft angle, rad
        self.velocity = 0.0  # rad/s from the last step
        self._sync_registers()

    def _sync_registers(self):
        self.registers._set_u16(ADDR_PRESENT_POSITION, rad_to_ticks(self.angle, self.spec.encoder_resolution))

    def set_angle(self, theta: float):
        """Teleport the shaft (test/scenario setup), registers included."""
        self.angle = float(theta)
        self.velocity = 0.0
        self._sync_registers()

    def write(self, addr: int, data: bytes):
        self.registers.write(addr, data)

    def read(self, addr: int, count: int) -> bytes:
        return self.registers.read(addr, count)

    def step(self, load_torque: float, dt: float, bus_voltage: float):
        """Advance the motor model by dt seconds under an external load.

        Positive load_torque acts against positive shaft rotation. With the
        drive saturated below the load there is no net motion toward the
        goal; with torque disabled the shaft back-drives through friction.
        """
        if not 0.0 < dt <= 0.01:
            raise ValueError(f"dt must be in (0, 0.01], got {dt}")
        spec = self.spec
        c = self.constants
        reg = self.registers
        vr = bus_voltage / spec.nominal_voltage

        gain = reg.u8(ADDR_P_GAIN)
        goal = ticks_to_rad(reg.u16(ADDR_GOAL_POSITION), spec.encoder_resolution)
        powered = reg.u8(ADDR_TORQUE_ENABLE) == 1

        stiffness = c.k_t * gain * vr
        if powered:
            drive = stiffness * (goal - self.angle)
            drive = min(spec.stall_torque, max(-spec.stall_torque, drive))
        else:
            drive = 0.0

        net = drive - load_torque
        if abs(net) <= c.mu_c:
            omega = 0.0
        else:
            omega = math.copysign((abs(net) - c.mu_c) / c.mu_v, net)

        omega_max = spec.no_load_speed_rpm * (2.0 * math.pi / 60.0) * vr
        speed_reg = reg.u16(ADDR_MOVING_SPEED)
        if speed_reg:
            omega_max *= speed_reg / 1023.0
        omega = min(omega_max, max(-omega_max, omega))

        new_angle = self.angle + omega * dt
        if powered and omega != 0.0 and stiffness > 0.0:
            # Equilibrium shaft angle where the net torque falls inside the
            # Coulomb band; never step across it (prevents limit cycling).
            # The clamp only binds when the equilibrium lies ahead in the
            # direction of motion; an overloaded servo yielding away from the
            # goal has no reachable equilibrium.
            stop = goal - (load_torque + math.copysign(c.mu_c, omega)) / stiffness
            if omega > 0.0 and stop >= self.angle:
                new_angle = min(new_angle, stop)
            elif omega < 0.0 and stop <= self.angle:
                new_angle = max(new_angle, stop)

        self.velocity = (new_angle - self.angle) / dt
        self.angle = new_angle

        self._sync_registers()
        nominal_speed = spec.no_load_speed_rpm * (2.0 * math.pi / 60.0)
        reg._set_u16(ADDR_PRESENT_SPEED, fraction_to_signed_magnitude(self.velocity / nominal_speed))
        reg._set_u16(ADDR_PRESENT_LOAD, fraction_to_signed_magnitude(drive / spec.stall_torque))
        reg._table[ADDR_PRESENT_VOLTAGE] = min(255, max(0, int(round(bus_voltage * 10.0))))


class Bus:
    """Half-duplex request/response multiplexer over emulated devices."""

    def __init__(self, devices: list[ServoDevice] | None = None):
        self.devices: dict[int, ServoDevice] = {}
        for dev in devices or []:
            self.attach(dev)

    def attach(self, device: ServoDevice):
        if device.id in self.devices:
            raise ValueError(f"duplicate device id {device.id}")
        self.devices[device.id] = device

    def handle(self, frame: bytes) -> bytes:
        """Process one instruction frame, returning the raw status frame(s)."""
        packet, _ = decode_packet(frame)
        responses = b""
        for response in self._dispatch(packet):
            responses += encode_packet(response)
        return responses

    def _dispatch(self, packet: BusPacket):
        broadcast = packet.id == BROADCAST_ID
        targets = list(self.devices.values()) if broadcast else [self.devices[packet.id]] if packet.id in self.devices else []
        if packet.instruction == INSTR_SYNC_WRITE:
            self._sync_write(packet)
            return
        for dev in targets:
            error = 0
            params = b""
            if packet.instruction == INSTR_PING:
                pass
            elif packet.instruction == INSTR_READ:
                if len(packet.params) != 2:
                    error = ERROR_INSTRUCTION
                else:
                    try:
                        params = dev.read(packet.params[0], packet.params[1])
                    except StatusError as exc:
                        error = exc.error
            elif packet.instruction == INSTR_WRITE:
                if len(packet.params) < 1:
                    error = ERROR_INSTRUCTION
                else:
                    try:
                        dev.write(packet.params[0], packet.params[1:])
                    except StatusError as exc:
                        error = exc.error
            else:
                error = ERROR_INSTRUCTION
            if not broadcast:
                yield BusPacket(id=dev.id, instruction=error, params=params)

    def _sync_write(self, packet: BusPacket):
        if len(packet.params) < 2:
            return
        addr, width = packet.params[0], packet.params[1]
        body = packet.params[2:]
        stride = width + 1
        if width == 0 or len(body) % stride != 0:
            return
        for k in range(0, len(body), stride):
            dev = self.devices.get(body[k])
            if dev is None:
                continue
            try:
                dev.write(addr, body[k + 1 : k + stride])
            except StatusError:
                pass  # broadcast writes never answer, errors included


def read_packet(device_id: int, addr: int, count: int) -> BusPacket:
    return BusPacket(id=device_id, instruction=INSTR_READ, params=bytes([addr, count]))


def write_packet(device_id: int, addr: int, data: bytes) -> BusPacket:
    return BusPacket(id=device_id, instruction=INSTR_WRITE, params=bytes([addr]) + bytes(data))


def sync_write_packet(addr: int, width: int, rows: dict[int, bytes]) -> BusPacket:
    params = bytearray([addr, width])
    for device_id, data in rows.items():
        if len(data) != width:
            raise ValueError(f"row for device {device_id} must be {width} bytes, got {len(data)}")
        params.append(device_id)
        params.extend(data)
    return BusPacket(id=BROADCAST_ID, instruction=INSTR_SYNC_WRITE, params=bytes(params))


def parse_status(frame: bytes, offset: int = 0) -> tuple[BusPacket, int]:
    """Decode a status packet and raise StatusError if the device flagged one."""
    packet, end = decode_packet(frame, offset)
    if packet.instruction != 0:
        raise StatusError(packet.id, packet.instruction)
    return packet, end
