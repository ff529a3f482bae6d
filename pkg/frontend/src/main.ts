/**
 * Single-page wiring: toolbar, joint list, timeline, skeleton view, and
 * a keyframe inspector, all driven by one EditorSession. The page talks
 * to the op2stack service over HTTP only; pass ?api=http://host:port to
 * point it somewhere other than the default localhost service.
 */

import { ApiClient } from "./api.js";
import { EditorSession } from "./session.js";
import { SkeletonPanel } from "./skeleton.js";
import { TimelinePanel } from "./timeline.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function apiBase(): string {
  const param = new URLSearchParams(window.location.search).get("api");
  if (param) return param.replace(/\/$/, "");
  return "http://127.0.0.1:8000";
}

export function startEditor(root: HTMLElement): EditorSession {
  const api = new ApiClient(apiBase());
  const session = new EditorSession(api, {
    confirmDiscard: (name) => window.confirm(`Discard unsaved edits to ${name}?`),
  });

  // --- toolbar ---------------------------------------------------------
  const toolbar = el("div", "toolbar");
  const picker = el("select");
  const loadBtn = el("button", "", "load");
  const saveBtn = el("button", "", "save");
  const saveAsBtn = el("button", "", "save as");
  const undoBtn = el("button", "", "undo");
  const dirtyDot = el("span", "dirty-dot", "unsaved");
  const staleBadge = el("span", "stale-badge", "preview out of date");
  toolbar.append(picker, loadBtn, saveBtn, saveAsBtn, undoBtn, dirtyDot, staleBadge);

  const banner = el("div", "banner");

  // --- panels ----------------------------------------------------------
  const columns = el("div", "columns");
  const jointCol = el("div", "joint-col");
  const centerCol = el("div", "center-col");
  const rightCol = el("div", "right-col");
  columns.append(jointCol, centerCol, rightCol);

  const jointList = el("ul", "joint-list");
  jointCol.append(el("h2", "", "joints"), jointList);

  const timelineMount = el("div", "timeline-mount");
  const cursorRow = el("div", "cursor-row");
  const cursorSlider = el("input") as HTMLInputElement;
  cursorSlider.type = "range";
  cursorSlider.min = "0";
  cursorSlider.step = "0.001";
  const cursorLabel = el("span", "cursor-label");
  cursorRow.append(cursorSlider, cursorLabel);
  centerCol.append(el("h2", "", "timeline"), timelineMount, cursorRow);

  const skeletonMount = el("div", "skeleton-mount");
  const inspector = el("div", "inspector");
  rightCol.append(el("h2", "", "pose"), skeletonMount, el("h2", "", "keyframe"), inspector);

  root.append(toolbar, banner, columns);

  const timeline = new TimelinePanel(session, timelineMount);
  const skeleton = new SkeletonPanel(session, skeletonMount);

  // --- behavior ----------------------------------------------------------
  loadBtn.addEventListener("click", () => void session.load(picker.value));
  saveBtn.addEventListener("click", () => void session.save());
  saveAsBtn.addEventListener("click", () => {
    const name = window.prompt("Save motion as:", session.motion?.name ?? "");
    if (name) void session.saveAs(name.trim());
  });
  undoBtn.addEventListener("click", () => session.undo());
  cursorSlider.addEventListener("input", () => session.setCursor(Number(cursorSlider.value)));
  window.addEventListener("beforeunload", (ev) => {
    if (session.dirty) ev.preventDefault();
  });

  function renderJointList(): void {
    jointList.replaceChildren();
    const motion = session.motion;
    if (motion === null) return;
    for (const joint of motion.joints) {
      const item = el("li", joint === session.selectedJoint ? "selected" : "");
      item.textContent = joint;
      if (session.violations.some((v) => v.joint === joint)) item.classList.add("violated");
      item.addEventListener("click", () => session.select(session.selectedKeyframe, joint));
      jointList.appendChild(item);
    }
  }

  function numberField(
    label: string,
    value: number,
    onCommit: (v: number) => void,
    problem?: string,
  ): HTMLElement {
    const row = el("label", "field");
    row.append(el("span", "field-name", label));
    const input = el("input") as HTMLInputElement;
    input.type = "number";
    input.step = "0.01";
    input.value = String(value);
    input.addEventListener("change", () => {
      const v = Number(input.value);
      if (Number.isFinite(v)) onCommit(v);
    });
    row.appendChild(input);
    if (problem) {
      row.classList.add("violated");
      row.appendChild(el("span", "field-problem", problem));
    }
    return row;
  }

  function renderInspector(): void {
    inspector.replaceChildren();
    const motion = session.motion;
    const joint = session.selectedJoint;
    if (motion === null) return;
    const idx = session.selectedKeyframe;
    const kf = motion.keyframes[idx];
    if (kf === undefined) return;

    inspector.append(el("div", "kf-title", `keyframe ${idx} of ${motion.keyframes.length}`));
    inspector.append(
      numberField("time [s]", kf.t, (v) => session.setKeyframeTime(idx, v), session.fieldErrors["t"]),
    );

    if (joint !== null) {
      const info = session.jointInfo(joint);
      const violation = session.violationAt(idx, joint);
      const hint = violation
        ? `outside [${violation.lower}, ${violation.upper}] rad`
        : session.fieldErrors[joint];
      const posRow = numberField(
        `${joint} pos [rad]`,
        kf.pos[joint] ?? 0,
        (v) => session.setJointPosition(idx, joint, v),
        hint,
      );
      if (info) {
        const range = el("span", "field-range", `limits ${info.lower} .. ${info.upper}`);
        posRow.appendChild(range);
      }
      inspector.append(posRow);
      inspector.append(
        numberField(`${joint} vel [rad/s]`, kf.vel?.[joint] ?? 0, (v) =>
          session.setJointVelocity(idx, joint, v),
        ),
      );
      inspector.append(
        numberField(`${joint} effort [0..1]`, kf.eff?.[joint] ?? 1, (v) =>
          session.setJointEffort(idx, joint, v),
        ),
      );
    }

    const supportRow = el("label", "field");
    supportRow.append(el("span", "field-name", "support"));
    const supportSel = el("select") as HTMLSelectElement;
    for (const mode of ["both", "left", "right"]) {
      const opt = el("option", "", mode) as HTMLOptionElement;
      opt.value = mode;
      supportSel.appendChild(opt);
    }
    supportSel.value = kf.support ?? "both";
    supportSel.addEventListener("change", () => session.setSupport(idx, supportSel.value));
    supportRow.appendChild(supportSel);
    inspector.append(supportRow);

    const kfButtons = el("div", "kf-buttons");
    const dupBtn = el("button", "", "duplicate");
    dupBtn.addEventListener("click", () => session.duplicateKeyframe(idx));
    const delBtn = el("button", "", "delete");
    delBtn.disabled = motion.keyframes.length <= 1;
    delBtn.addEventListener("click", () => session.deleteKeyframe(idx));
    const prevBtn = el("button", "", "prev");
    prevBtn.addEventListener("click", () => session.select(idx - 1));
    const nextBtn = el("button", "", "next");
    nextBtn.addEventListener("click", () => session.select(idx + 1));
    kfButtons.append(prevBtn, nextBtn, dupBtn, delBtn);
    inspector.append(kfButtons);

    const schema = session.schemaErrors;
    if (schema.length > 0) {
      inspector.append(el("div", "schema-errors", schema.join("; ")));
    }
  }

  function render(): void {
    picker.replaceChildren();
    for (const name of session.model?.motions ?? []) {
      const opt = el("option", "", name) as HTMLOptionElement;
      opt.value = name;
      if (session.motion?.name === name) opt.selected = true;
      picker.appendChild(opt);
    }

    dirtyDot.style.visibility = session.dirty ? "visible" : "hidden";
    staleBadge.style.visibility =
      session.staleCurves || session.staleSkeleton ? "visible" : "hidden";
    saveBtn.disabled = !session.canSave || !session.dirty;
    undoBtn.disabled = !session.canUndo;
    banner.textContent = session.banner ?? "";
    banner.style.display = session.banner ? "block" : "none";

    const motion = session.motion;
    if (motion !== null) {
      const end = motion.keyframes[motion.keyframes.length - 1].t;
      cursorSlider.max = String(end);
      cursorSlider.value = String(session.cursor);
      cursorLabel.textContent = `${session.cursor.toFixed(3)} s`;
    }

    renderJointList();
    renderInspector();
    timeline.render();
    skeleton.render();
  }

  session.onChange(render);
  void session.init().then(() => {
    const first = session.model?.motions[0];
    if (first) void session.load(first);
  });
  render();
  return session;
}

declare global {
  interface Window {
    op2stackEditor?: EditorSession;
  }
}

const mount = document.getElementById("editor");
if (mount !== null) {
  window.op2stackEditor = startEditor(mount);
}
