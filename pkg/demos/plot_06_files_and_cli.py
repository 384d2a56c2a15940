"""
Tensor files, previews and the command line
===========================================

Round-trip an image through the BRSTNSR1 container, export a PGM preview, and
run a reduced experiment through the ``i3sb`` command line in a temporary
directory.
"""

import os
import tempfile
from pathlib import Path

import numpy as np

from i3sb import cli
from i3sb.tensor_io import ImageTensor, export_pgm, read_pgm, read_tensor, write_tensor

work = Path(tempfile.mkdtemp())

img = ImageTensor(np.linspace(-1, 1, 12).reshape(3, 4))
write_tensor(img, work / "ramp.bin")
print("file size", (work / "ramp.bin").stat().st_size, "bytes; round trip equal:", read_tensor(work / "ramp.bin") == img)
export_pgm(img, work / "ramp.pgm", -1.0, 1.0)
print(read_pgm(work / "ramp.pgm"))

# a small experiment: 8 training images of 32x32, two sampling grids
config = work / "small.ini"
config.write_text("""
[dataset]
train_count = 8
test_count = 2
size = 32

[predictor]
iters = 1000

[sampler]
N = 20, 50
""")
os.environ["BRIDGE_RESULTS_DIR"] = str(work / "results")
for command in (["gen-data"], ["train"], ["sample", "--jobs", "2"], ["eval"]):
    print("i3sb", *command, "->", cli.main(command + ["--config", str(config)]))

print((work / "results" / "eval" / "metrics.csv").read_text())
print("outputs in", work / "results")
