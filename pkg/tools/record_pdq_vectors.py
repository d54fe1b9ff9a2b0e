"""Generate the frozen PDQ test images and record reference digests.

Writes tests/data/img_NN.{pgm,ppm} plus tests/data/pdq_vectors.json.
The digests come from the float32 reference transcription in
tests/oracles.py; the recorded files are committed and never regenerated
by the test suite.
"""

import json
import pathlib
import sys
import time

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

import numpy as np  # noqa: E402

from oracles import pdq_reference  # noqa: E402
from synthimg import smooth_image  # noqa: E402

# load the imaging module by path so this tool does not depend on the
# rest of the package being importable yet
import importlib.util  # noqa: E402

_spec = importlib.util.spec_from_file_location("_imaging", ROOT / "src" / "phg" / "imaging.py")
_imaging = importlib.util.module_from_spec(_spec)
sys.modules["_imaging"] = _imaging
_spec.loader.exec_module(_imaging)
ImageBuffer = _imaging.ImageBuffer
load_image_path = _imaging.load_image_path
save_image = _imaging.save_image

# seed, width, height, rgb -- sizes chosen to cover filter windows 1..4,
# non-square and odd dimensions, and both sample layouts
CASES = [
    (101, 64, 64, False),
    (102, 100, 80, False),
    (103, 128, 128, False),
    (104, 97, 173, False),
    (105, 200, 300, True),
    (106, 256, 256, False),
    (107, 129, 257, False),
    (108, 320, 240, True),
    (109, 384, 512, False),
    (110, 512, 384, True),
    (111, 61, 67, False),
    (112, 240, 180, True),
]


def main() -> None:
    data_dir = ROOT / "tests" / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for idx, (seed, w, h, rgb) in enumerate(CASES, start=1):
        arr = smooth_image(seed, w, h, rgb=rgb)
        name = "img_%02d.%s" % (idx, "ppm" if rgb else "pgm")
        path = data_dir / name
        path.write_bytes(save_image(ImageBuffer.from_array(arr)))

        # sanity: the file roundtrips to the same samples
        loaded = load_image_path(path).to_array()
        flat = loaded[:, :, 0] if loaded.shape[2] == 1 else loaded
        assert np.array_equal(flat, arr), name

        t0 = time.time()
        digest, quality = pdq_reference(flat)
        print("%-10s %dx%d  q=%3d  %s  (%.1fs)" % (name, w, h, quality, digest.hex(), time.time() - t0))
        records.append({"file": name, "pdq_hex": digest.hex(), "reference_quality": quality})

    out = data_dir / "pdq_vectors.json"
    out.write_text(json.dumps(records, indent=2) + "\n")
    print("wrote", out)


if __name__ == "__main__":
    main()
