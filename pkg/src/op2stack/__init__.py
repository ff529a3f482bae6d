"""Control stack and desk-scale simulator for a 20-DOF parallel-kinematics humanoid."""

__version__ = "0.1.0"
