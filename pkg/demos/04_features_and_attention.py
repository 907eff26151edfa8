"""Frontend features and the inter-channel attention correlation.

Encodes both channels of a simulated mixture and visualizes the frame
alignment matrix the IAC feature is built from. With an untrained encoder
the map is diffuse; the diagonal ridge sharpens as training aligns the
channels. Run:

    python3 demos/04_features_and_attention.py
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from sdnet.datasim import RoomSpec, simulate_mixture
from sdnet.frontend import FeatureExtractor

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)

room = RoomSpec(dims=(6, 5, 3), rt60=0.0, mic_positions=((2.95, 2.5, 1.5), (3.05, 2.5, 1.5)))
example = simulate_mixture([1, 4], room, seed=3, duration_s=0.5)
stereo = torch.as_tensor(example.mixture, dtype=torch.float32)

torch.manual_seed(0)
frontend = FeatureExtractor(channels=64)
e1 = frontend.encode_channel(stereo[0], which=1)
e2 = frontend.encode_channel(stereo[1], which=2)
feats, feats_inf = frontend(stereo)
print(f"frames: {e1.shape[0]}, F width {feats.shape[1]}, F_o width {feats_inf.shape[1]}")

scores = e1 @ e2.T
attn = torch.softmax(scores, dim=-1)
print(f"attention row sums: min {attn.sum(-1).min():.6f}, max {attn.sum(-1).max():.6f}")

fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
axes[0].imshow(attn.detach().numpy(), aspect="auto", origin="lower", cmap="viridis")
axes[0].set_title("inter-channel attention (rows: ch-1 frames)")
axes[0].set_xlabel("channel-2 frame")
axes[0].set_ylabel("channel-1 frame")
axes[1].imshow(feats_inf.detach().numpy().T, aspect="auto", origin="lower", cmap="magma")
axes[1].set_title("inference features F_o = [IAC, E1, E2]")
axes[1].set_xlabel("frame")
axes[1].set_ylabel("feature channel")
fig.tight_layout()
fig.savefig(out_dir / "features_and_attention.png", dpi=110)
print(f"wrote {out_dir / 'features_and_attention.png'}")
