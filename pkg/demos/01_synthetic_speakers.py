"""Synthetic speaker signals: deterministic harmonic pseudo-speech.

Each speaker has a fixed fundamental (90 + 3*id Hz) and a formant-like
resonance; a slow random envelope modulates amplitude. Run:

    python3 demos/01_synthetic_speakers.py
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sdnet.datasim import fundamental_hz, synth_speaker_signal

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)

fig, axes = plt.subplots(2, 2, figsize=(11, 6))
for col, speaker in enumerate([0, 5]):
    x = synth_speaker_signal(speaker, duration_s=1.0, seed=7)
    t = np.arange(len(x)) / 8000.0
    axes[0, col].plot(t[:2400], x[:2400], linewidth=0.6)
    axes[0, col].set_title(f"speaker {speaker} (F0 = {fundamental_hz(speaker):.0f} Hz)")
    axes[0, col].set_xlabel("time (s)")

    spectrum = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(len(x), 1 / 8000.0)
    axes[1, col].semilogy(freqs[:2000], spectrum[:2000] + 1e-6, linewidth=0.7)
    axes[1, col].axvline(fundamental_hz(speaker), color="r", linestyle=":", label="F0")
    axes[1, col].set_xlabel("frequency (Hz)")
    axes[1, col].legend()

    peak_hz = int(np.argmax(spectrum))
    print(f"speaker {speaker}: peak at {peak_hz} Hz, nominal F0 {fundamental_hz(speaker):.0f} Hz, "
          f"peak amplitude {np.max(np.abs(x)):.2f}")

fig.tight_layout()
fig.savefig(out_dir / "synthetic_speakers.png", dpi=110)
print(f"wrote {out_dir / 'synthetic_speakers.png'}")
