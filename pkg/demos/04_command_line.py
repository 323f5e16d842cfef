# %% [markdown]
# # Command-line pipeline
#
# The same steps through the `anchordepth` command: generate data, train
# briefly, evaluate, transform a depth map and back-project it.

# %%
import subprocess
import tempfile
from pathlib import Path

work = Path(tempfile.mkdtemp())


def run(*args):
    cmd = ["anchordepth", *map(str, args)]
    print("$", " ".join(cmd))
    done = subprocess.run(cmd, capture_output=True, text=True)
    print(done.stdout + done.stderr)
    return done.returncode


run("--seed", 7, "generate", "--out", work / "data", "--count", 16)
run("train", "--data", work / "data/manifest.tsv", "--out-checkpoint", work / "m.ckpt",
    "--steps", 50)
run("eval", "--data", work / "data/manifest.tsv", "--checkpoint", work / "m.ckpt",
    "--anchor-sweep", "--cap", 10)

# %%
depth = sorted((work / "data/depth").iterdir())[0]
run("transform", "--depth-in", depth, "--mode", "normalize", "--anchor", 10,
    "--out", work / "n.npz")
run("transform", "--depth-in", work / "n.npz", "--mode", "reproject", "--out", work / "r.pfm")
run("reconstruct", "--depth", work / "r.pfm", "--fx", 56, "--fy", 56, "--cx", 31.5,
    "--cy", 31.5, "--out", work / "cloud.ply")

# %% [markdown]
# Usage errors exit with 1, runtime failures with 2.

# %%
print("exit code", run("generate", "--out", work / "x", "--count", 0))
