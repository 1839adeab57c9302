"""Generated BVH corpus shared by the BVH tests and the acceptance suite."""
import numpy as np

ORDERS = ("ZXY", "XYZ", "YZX")


def _joint_block(rng, name, depth, order, budget, lines):
    pad = "  " * depth
    lines.append(f"{pad}JOINT {name}")
    lines.append(f"{pad}{{")
    off = rng.uniform(-10, 10, 3)
    lines.append(f"{pad}  OFFSET {off[0]:.6f} {off[1]:.6f} {off[2]:.6f}")
    lines.append(f"{pad}  CHANNELS 3 " + " ".join(f"{c}rotation" for c in order))
    channels = 3
    n_children = int(rng.integers(0, 3)) if budget[0] > 0 else 0
    if n_children == 0:
        end = rng.uniform(-5, 5, 3)
        lines.append(f"{pad}  End Site")
        lines.append(f"{pad}  {{")
        lines.append(f"{pad}    OFFSET {end[0]:.6f} {end[1]:.6f} {end[2]:.6f}")
        lines.append(f"{pad}  }}")
    for c in range(n_children):
        budget[0] -= 1
        channels += _joint_block(rng, f"{name}_{c}", depth + 1, order, budget, lines)
    lines.append(f"{pad}}}")
    return channels


def make_bvh_text(rng, order, frames, n_joints=6):
    lines = ["HIERARCHY", "ROOT Hips", "{", "  OFFSET 0.000000 0.000000 0.000000",
             "  CHANNELS 6 Xposition Yposition Zposition " + " ".join(f"{c}rotation" for c in order)]
    budget = [n_joints]
    channels = 6
    for c in range(2):
        budget[0] -= 1
        channels += _joint_block(rng, f"J{c}", 1, order, budget, lines)
    lines.append("}")
    lines += ["MOTION", f"Frames: {frames}", "Frame Time: 0.0333333"]
    data = rng.uniform(-180, 180, (frames, channels))
    data[:, :3] = rng.normal(0, 50, (frames, 3))
    lines += [" ".join(f"{v:.6f}" for v in row) for row in data]
    return "\n".join(lines) + "\n"


def bvh_corpus(seed=0, count=9):
    """``count`` BVH texts: nested joints with End Sites, three rotation orders, one empty."""
    rng = np.random.default_rng(seed)
    texts = {}
    for i in range(count):
        order = ORDERS[i % len(ORDERS)]
        frames = 0 if i == count - 1 else int(rng.integers(1, 40))
        texts[f"clip_{i:02d}_{order}.bvh"] = make_bvh_text(rng, order, frames, n_joints=4 + i)
    return texts
