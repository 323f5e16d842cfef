# %% [markdown]
# # Synthetic scenes, files and point clouds
#
# The scene generator ray-casts a pinhole camera into a ground plane plus
# boxes and spheres.  Indoor scenes add walls and a ceiling; outdoor scenes
# have a sky at infinite depth.

# %%
import tempfile
from pathlib import Path

import numpy as np

from anchordepth.depthio import read_depth, write_depth
from anchordepth.reconstruct import backproject, read_pointcloud, write_pointcloud
from anchordepth.scenegen import SceneSpec, generate_scene

for regime in ("indoor", "outdoor"):
    image, depth = generate_scene(SceneSpec(regime=regime, seed=3, primitive_count=8))
    finite = depth.values[np.isfinite(depth.values)]
    print(regime, image.shape, "depth %.2f..%.2f m" % (finite.min(), finite.max()),
          "sky pixels", int(np.isinf(depth.values).sum()))

# %% [markdown]
# Depth maps go to PFM (exact float32) or 16-bit PNG (quantized, with the
# scale stored in a text chunk).

# %%
out = Path(tempfile.mkdtemp())
write_depth(out / "d.pfm", depth)
write_depth(out / "d.png", depth, scale=0.01)
for name in ("d.pfm", "d.png"):
    back = read_depth(out / name).values
    fin = np.isfinite(depth.values)
    print(name, "max error %.2e m" % np.abs(back[fin] - depth.values[fin]).max())

# %% [markdown]
# Back-projection uses integer pixel centers; sky pixels are skipped.

# %%
spec = SceneSpec(regime="outdoor", seed=3, primitive_count=8)
image, depth = generate_scene(spec)
cloud = backproject(depth, spec.intrinsics, image)
write_pointcloud(out / "scene.ply", cloud)
print(len(read_pointcloud(out / "scene.ply")), "points written to", out / "scene.ply")
