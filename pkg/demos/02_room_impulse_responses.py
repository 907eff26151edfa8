"""Image-method room impulse responses.

Shows the anechoic direct path (a single sample at the expected delay with
1/(4*pi*d) amplitude) and a reverberant response whose Schroeder decay
matches the requested rt60. Run:

    python3 demos/02_room_impulse_responses.py
"""

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sdnet.datasim import RoomSpec, generate_rir

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)

fig, axes = plt.subplots(1, 3, figsize=(13, 4))

# anechoic: pure direct path
room = RoomSpec(dims=(8, 6, 4), rt60=0.0, mic_positions=((3.95, 3, 2), (4.05, 3, 2)))
mic = np.array([3.95, 3.0, 2.0])
src = mic + np.array([1.715, 0.0, 0.0])
h = generate_rir(room, src, mic)
axes[0].stem(np.arange(60), h[:60])
axes[0].set_title("anechoic: direct path only")
axes[0].set_xlabel("sample")
print(f"direct path: peak at sample {np.argmax(np.abs(h))}, "
      f"amplitude {h.max():.5f} vs 1/(4*pi*1.715) = {1/(4*math.pi*1.715):.5f}")

# reverberant response and its decay curve
room_r = RoomSpec(dims=(5, 4, 3), rt60=0.2, mic_positions=((2.45, 2, 1.5), (2.55, 2, 1.5)))
h_r = generate_rir(room_r, np.array([1.5, 3.0, 1.2]), np.array([2.45, 2.0, 1.5]))
t = np.arange(len(h_r)) / 8000.0
axes[1].plot(t, h_r, linewidth=0.5)
axes[1].set_title("reverberant (rt60 = 0.2 s)")
axes[1].set_xlabel("time (s)")

energy = h_r**2
edc = np.cumsum(energy[::-1])[::-1]
edc_db = 10 * np.log10(edc / edc[0] + 1e-300)
axes[2].plot(t, edc_db)
axes[2].axhline(-60, color="r", linestyle=":")
axes[2].axvline(0.2, color="g", linestyle=":", label="nominal rt60")
axes[2].set_ylim(-90, 2)
axes[2].set_title("Schroeder decay")
axes[2].set_xlabel("time (s)")
axes[2].legend()
t60 = np.argmax(edc_db <= -60.0) / 8000.0
print(f"measured -60 dB crossing: {t60:.3f} s (nominal 0.200 s)")

fig.tight_layout()
fig.savefig(out_dir / "room_impulse_responses.png", dpi=110)
print(f"wrote {out_dir / 'room_impulse_responses.png'}")
