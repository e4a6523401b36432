"""IMU error model at a glance: gravity, white noise, bias drift, quantisation.

Run:  python3 demos/04_imu_noise.py
"""

import numpy as np

from railsim.sensors import ImuChannel, ImuConfig, ImuModel

n, period = 60_000, 0.01  # ten minutes at 100 Hz
t = np.arange(n) * period
still = np.zeros((n, 3))
tilt = np.tile([0.3, 0.05, 0.0], (n, 1))  # yaw, pitch, roll in radians

ideal = ImuModel(ImuConfig(), seed=0).run_table(t, still, still, tilt)
print("noise-free accelerometer at 0.05 rad pitch:", np.round(ideal[0, 1:4], 6))

channel = ImuChannel(noise_density=0.002, bias_instability=0.0005, correlation_time=100.0,
                     random_walk=0.0003, quantization=0.0005)
noisy = ImuModel(ImuConfig(accel=channel), seed=1).run_table(t, still, still, tilt)
err = noisy[:, 1:4] - ideal[:, 1:4]
print(f"white-noise level per sample: {channel.noise_density / np.sqrt(period):.4f} m/s^2")
print(f"observed std over 10 min:     {err.std(axis=0).round(4)} m/s^2")
for minutes in (1, 5, 10):
    k = int(minutes * 60 / period) - 1
    print(f"  mean error over the first {minutes:2d} min: {err[: k + 1].mean(axis=0).round(5)}")
levels = np.unique(np.round(noisy[:, 1:4] / channel.quantization, 9) % 1)
print(f"every reading a multiple of {channel.quantization}: {np.allclose(levels, 0) or np.allclose(levels, [0, 1])}")
