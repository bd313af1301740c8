"""Causal category-level 9DoF pose estimation on a synthetic biased benchmark.

A small, fully deterministic pipeline: parametric point-cloud data with a
controllable yaw bias, a keypoint-based pose estimator with a front-door
causal attention block fed by a dynamic cross-sample feature queue, residual
knowledge distillation from a frozen shape-descriptor teacher, and
oriented-box / rotation-translation evaluation with report and figure output.
"""

__version__ = "0.1.0"
