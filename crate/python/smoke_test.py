"""Smoke test for the pydetkit extension.

Build first:
    cargo build --release -p pydetkit --features extension-module
then run:
    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_pydetkit():
    try:
        import pydetkit
        return pydetkit
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "libpydetkit.so")
        if os.path.exists(lib):
            tmp = tempfile.mkdtemp()
            shutil.copy(lib, os.path.join(tmp, "pydetkit.so"))
            sys.path.insert(0, tmp)
            import pydetkit
            return pydetkit
    sys.exit("pydetkit not built; run cargo build --release -p pydetkit --features extension-module")


dk = import_pydetkit()
tmp = tempfile.mkdtemp()

# tensors and ops
x = dk.Tensor([1, 2, 3, 3], [float(i) for i in range(18)])
w = dk.Tensor([1, 2, 1, 1], [1.0, -1.0])
y = dk.conv2d(x, w, [0.5])
assert y.shape == [1, 1, 3, 3]
assert all(abs(v - (-8.5)) < 1e-12 for v in y.data)

path = os.path.join(tmp, "x.dkt")
x.save(path)
assert dk.Tensor.load(path) == x

pw = dk.Tensor([1, 1, 3, 3], [0.1] * 9)
p = dk.pconv(x, pw, 1)
assert p.data[9:] == x.data[9:]

relu = dk.activation(dk.Tensor([1, 1, 1, 2], [-1.0, 2.0]), "relu")
assert relu.data == [0.0, 2.0]
assert dk.spp(x, []) == x
assert dk.cbam(x, reduction=1).shape == x.shape

# losses
assert abs(dk.iou([0, 0, 1, 1], [0.5, 0, 1.5, 1]) - 1 / 3) < 1e-12
assert abs(dk.wiou_loss([0, 0, 1, 1], [0.5, 0, 1.5, 1]) - math.exp(0.25 / 3.25) * 2 / 3) < 1e-9
assert abs(dk.ciou_loss([0, 0, 2, 2], [0, 0, 2, 2])) < 1e-12

# postprocess
dets = [
    {"bbox": [0, 0, 10, 10], "score": 0.9, "class": 0},
    {"bbox": [1, 1, 11, 11], "score": 0.8, "class": 0},
    {"bbox": [1, 1, 11, 11], "score": 0.7, "class": 1},
]
kept = dk.nms(dets, 0.5)
assert [d["score"] for d in kept] == [0.9, 0.7]
assert dk.decode(dk.Tensor.zeros([1, 7, 2, 2]), 8.0, 2, 0.3) == []

# cost model
part = dk.pconv_cost(16, 16, 64, 16, 3)
full = dk.conv_cost(16, 16, 64, 64, 3)
assert part["mem_access_approx"] * 4 == full["mem_access_approx"]
cmp = dk.bench(cp_fraction=0.25)
assert cmp["pconv"]["totals"]["params"] < cmp["full"]["totals"]["params"]

# gradient check
rows = dk.gradcheck("relu", cases=5)
assert rows[0]["passed"] and rows[0]["op"] == "relu"

# evaluation
gt = [[{"bbox": [0, 0, 5, 5], "class": 0}]]
perfect = dk.evaluate([[{"bbox": [0, 0, 5, 5], "score": 1.0, "class": 0}]], gt, 1)
assert perfect["summary"]["precision"] == 1.0 and perfect["summary"]["ap"] == 1.0

# training and weights
model, stats = dk.train_toy({"epochs": 2, "dataset_size": 4, "batch_size": 2})
assert len(stats) == 2 and stats[0]["phase"] == "frozen"
wpath = os.path.join(tmp, "m.dkw")
model.save(wpath)
again = dk.Model.load(wpath)
assert again.num_params() == model.num_params()
assert again.config["image_size"] == 64
out = again.detect(dk.Tensor.zeros([1, 3, 64, 64]), score_threshold=0.0)
assert len(out) == 1
summary = again.evaluate({"dataset_size": 4})["summary"]
assert 0.0 <= summary["precision"] <= 1.0

with open(wpath, "r+b") as f:
    f.seek(40)
    b = f.read(1)
    f.seek(40)
    f.write(bytes([b[0] ^ 0xFF]))
try:
    dk.Model.load(wpath)
    raise AssertionError("corrupt weights loaded")
except dk.DetkitError as e:
    assert "checksum" in str(e)

try:
    dk.train_toy({"epochs": 1, "no_such_key": 3})
    raise AssertionError("unknown key accepted")
except dk.DetkitError:
    pass

print("pydetkit smoke test: ok")
