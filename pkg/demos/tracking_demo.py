"""Track a synthetic closed walk and compare stance aiding modes.

Renders one 120 m square walk with RazorIMU-magnitude noise, runs the
filter three ways (soft score-weighted updates, hard on/off updates,
no stance aiding at all), and prints the return-to-start error each
mode leaves behind.

Run: python3 demos/tracking_demo.py
"""

import dataclasses
import time

import numpy as np

from pdrnav import constants
from pdrnav.gait import GaitParams, generate_gait, inverse_imu, razor_noise, scale_calibration
from pdrnav.tracker import ImuLog, epsilon_ttd, evaluate_trajectory, run_tracker
from pdrnav.zupt import default_stance_config

fs = 100.0
cal_a = scale_calibration(constants.DEFAULT_LSB_ACCEL)
cal_w = scale_calibration(constants.DEFAULT_LSB_GYRO)

params = GaitParams(
    step_length=1.0,
    cadence=1.5,
    path=[[0.0, 0.0], [30.0, 0.0], [30.0, 30.0], [0.0, 30.0], [0.0, 0.0]],
    seed=1,
)
truth = generate_gait(params, fs)
counts_a, counts_w = inverse_imu(truth, cal_a, cal_w, razor_noise(fs), seed=1)
log = ImuLog(t=truth.t, accel=counts_a, gyro=counts_w, fs=fs,
             lsb_accel=constants.DEFAULT_LSB_ACCEL,
             lsb_gyro=constants.DEFAULT_LSB_GYRO)
print(f"walk: {truth.path_length:.0f} m closed square, "
      f"{log.t.size} samples at {fs:.0f} Hz, "
      f"{len(truth.footfalls)} footfalls")

for mode in ("soft", "hard", "none"):
    cfg = dataclasses.replace(default_stance_config(fs), mode=mode)
    t0 = time.perf_counter()
    traj = run_tracker(log, cal_a, cal_w, stance_cfg=cfg)
    elapsed = time.perf_counter() - t0
    eps = epsilon_ttd(traj, truth.path_length)
    closure = np.linalg.norm(traj.p[-1] - traj.p[0])
    print(f"  {mode:5s}: eps_ttd {eps:.4f}  closure {closure:6.2f} m  "
          f"({elapsed:.1f} s)")

# checkpoint errors against the planted foot positions, soft mode
traj = run_tracker(log, cal_a, cal_w)
report = evaluate_trajectory(traj, truth, truth.path_length)
errors = np.array(report.checkpoint_errors)
print(f"\nsoft mode, {errors.size} stance checkpoints: "
      f"median error {np.median(errors):.3f} m, worst {errors.max():.3f} m")
print("the worst error sits mid-walk; the closure pulls it back because "
      "the per-stride bias largely cancels around a closed loop")
