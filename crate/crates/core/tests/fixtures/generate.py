"""Regenerates the reference fixtures under this directory.

Requires numpy, Pillow (libjpeg-backed) and scikit-image (sample images).
Outputs are committed; tests never run this script.
"""
import io
import json
import os

import numpy as np
import skimage.data
from PIL import Image

HERE = os.path.dirname(os.path.abspath(__file__))


def save(img, name):
    img.save(os.path.join(HERE, name), optimize=False)


def psnr(a, b):
    mse = ((a.astype(np.float64) - b.astype(np.float64)) ** 2).mean() / 255.0**2
    return 10 * np.log10(1.0 / mse)


face = Image.fromarray(skimage.data.astronaut()).crop((160, 20, 352, 212))
face64 = face.resize((64, 64), Image.LANCZOS)
cat128 = Image.fromarray(skimage.data.chelsea()).resize((128, 128), Image.LANCZOS)
save(face64, "face64.png")
save(cat128, "cat128.png")

# Reference codec output: libjpeg via Pillow, quality 75, default 4:2:0 and 4:4:4.
report = {}
for sub, tag in [(2, "420"), (0, "444")]:
    buf = io.BytesIO()
    face64.save(buf, "JPEG", quality=75, subsampling=sub)
    data = buf.getvalue()
    with open(os.path.join(HERE, f"ref_q75_{tag}.jpg"), "wb") as f:
        f.write(data)
    dec = Image.open(io.BytesIO(data))
    dec.load()
    save(dec.convert("RGB"), f"ref_q75_{tag}_decoded.png")

# Reference quantization tables (natural row-major order) for a few qualities.
tables = {}
for q in [1, 10, 25, 50, 75, 90, 95, 100]:
    buf = io.BytesIO()
    face64.save(buf, "JPEG", quality=q)
    im = Image.open(io.BytesIO(buf.getvalue()))
    tables[str(q)] = {"luminance": list(im.quantization[0]), "chrominance": list(im.quantization[1])}
with open(os.path.join(HERE, "ref_quant_tables.json"), "w") as f:
    json.dump(tables, f, indent=1)

# Reference round-trip PSNR thresholds for the natural fixtures.
for name, img in [("face64", face64), ("cat128", cat128)]:
    for q in [75, 95]:
        for sub in [2, 0]:
            buf = io.BytesIO()
            img.save(buf, "JPEG", quality=q, subsampling=sub)
            dec = np.array(Image.open(io.BytesIO(buf.getvalue())).convert("RGB"))
            report[f"{name}_q{q}_sub{sub}"] = round(psnr(np.array(img), dec), 3)
print(json.dumps(report, indent=1))
