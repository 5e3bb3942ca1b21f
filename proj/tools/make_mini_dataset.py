#!/usr/bin/env python3
# Copyright 2026 The crowdvis Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Regenerates data/mini: 20 projects (plus one malformed row), their images,
two fixture annotation files and a pipeline config.

Deterministic: the same script produces the same files. Needs numpy and Pillow.
"""

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "mini"
FIXTURES = ROOT / "data" / "fixtures"

rng = np.random.default_rng(20260415)

LABELS = ["product", "person", "art", "design", "technology", "food", "outdoor", "music", "book", "game",
          "animal", "illustration", "poster", "text", "toy", "gadget", "drawing", "color", "pattern", "sky"]

BLURBS = [
    "The best travel mug ever made, with an innovative seal",
    "A new board game for curious families",
    "Our first album, recorded live in one take",
    "A revolutionary bike light you will actually remember to charge",
    "Handmade ceramic planters from a small studio",
    "The ultimate pocket notebook for sketching outdoors",
    "An original comic about a cat who runs a bakery",
    "A unique smart collar that keeps track of your dog",
    "Fresh hot sauce from our family recipe",
    "A groundbreaking open source synthesizer",
    "Stories from the coast, printed on recycled paper",
    "A perfect minimalist wallet in premium leather",
    "The finest cold brew kit for your kitchen",
    "A creative card game about building cities",
    "Our documentary about angry neighbours and a lost garden",
    "A modern desk lamp with a prototype dimmer",
    "An exceptional guide to mountain foraging",
    "A novel puzzle box with hidden compartments",
    "The greatest enamel pins for tired designers",
    "A futuristic kite that folds into your pocket",
]

FULL_TEXT_EXTRA = [
    "We hate waste and we are tired of cheap products that break.",
    "Backers will receive early access and a thank you note.",
    "We are furious about how expensive good tools have become.",
    "This campaign funds the first production run.",
    "Every reward ships before the holidays.",
    "Nobody should have to fight with their gear.",
]


def fixture_image(name, max_side):
    img = Image.open(FIXTURES / name).convert("RGB")
    img.thumbnail((max_side, max_side), Image.BILINEAR)
    return img


def synthetic_image(kind, w, h):
    img = Image.new("RGB", (w, h))
    px = np.zeros((h, w, 3), dtype=np.float64)
    yy, xx = np.mgrid[0:h, 0:w]
    base = rng.uniform(30, 220, size=3)
    if kind == "gradient":
        top, bottom = rng.uniform(0, 255, size=3), rng.uniform(0, 255, size=3)
        t = (yy / max(h - 1, 1))[..., None]
        px = top * (1 - t) + bottom * t
    elif kind == "object":
        px[:] = base
        cx, cy = rng.uniform(0.3, 0.7) * w, rng.uniform(0.3, 0.7) * h
        r = rng.uniform(0.15, 0.3) * min(w, h)
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        px[mask] = rng.uniform(0, 255, size=3)
    elif kind == "stripes":
        period = rng.integers(8, 24)
        on = ((xx + yy) // period) % 2 == 0
        px[:] = base
        px[on] = 255 - base
    else:  # texture
        px[:] = base
        px += rng.normal(0, 35, size=(h, w, 3))
    px += rng.normal(0, 4, size=px.shape)
    img = Image.fromarray(np.clip(px, 0, 255).astype(np.uint8))
    if kind == "object":
        d = ImageDraw.Draw(img)
        x0, y0 = int(rng.uniform(0.05, 0.2) * w), int(rng.uniform(0.6, 0.8) * h)
        d.rectangle([x0, y0, x0 + w // 5, y0 + h // 8], fill=tuple(int(v) for v in rng.uniform(0, 255, 3)))
    return img


def encode(img, fmt):
    buf = io.BytesIO()
    if fmt == "png":
        img.save(buf, format="PNG", optimize=False)
    else:
        img.save(buf, format="JPEG", quality=90)
    return buf.getvalue()


def main():
    (OUT / "images").mkdir(parents=True, exist_ok=True)
    (OUT / "annotations").mkdir(parents=True, exist_ok=True)
    for old in (OUT / "images").iterdir():
        old.unlink()

    fixtures = {1: ("astronaut.png", "png"), 4: ("rocket.jpg", "jpg"), 7: ("chelsea.png", "png"),
                9: ("coffee.png", "png"), 12: ("camera.png", "png")}
    kinds = ["gradient", "object", "stripes", "texture"]
    rows, google, azure = [], {}, {}
    for i in range(1, 21):
        pid = f"p{i:02d}"
        n_images = int(rng.integers(0, 12))
        n_videos = int(rng.integers(0, 3))
        goal = float(np.round(np.exp(rng.uniform(np.log(500), np.log(50000))), 2))
        # Visual counts carry most of the signal, as in the larger studies.
        log_pledged = (np.log(goal) - 1.0 + 0.25 * n_images + 0.6 * n_videos - 0.01 * n_images ** 2
                       + rng.normal(0, 0.8))
        pledged = float(np.round(max(np.exp(log_pledged) - 1, 0.0), 2))
        country = ["US"] * 12 + ["GB"] * 4 + ["CA"] * 2 + ["DE"] * 2
        month = int(rng.integers(1, 13))
        day = int(rng.integers(1, 28))
        year = int(rng.integers(2014, 2020))
        duration = int(rng.integers(20, 61))
        launched = np.datetime64(f"{year}-{month:02d}-{day:02d}")
        deadline = launched + np.timedelta64(duration, "D")
        text = BLURBS[i - 1] + ". " + " ".join(rng.choice(FULL_TEXT_EXTRA, size=3, replace=False))
        row = {
            "id": pid,
            "goal_usd": f"{goal:.2f}",
            "pledged_usd": f"{pledged:.2f}",
            "staff_pick": "true" if rng.uniform() < 0.2 else "false",
            "country": country[i - 1],
            "launched_at": str(launched),
            "deadline": str(deadline),
            "blurb": BLURBS[i - 1],
            "full_text": text,
            "backers": str(int(pledged // 40)),
        }
        if i % 3 == 0:
            # Counts come from the description markup instead of explicit columns.
            parts = ["<p>About the project</p>"] + ['<img src="a.jpg">'] * n_images
            parts += ['<iframe src="https://www.youtube.com/embed/x"></iframe>'] * n_videos
            parts.append('<!-- <img src="draft.jpg"> -->')
            row["description_html"] = "".join(parts)
            row["n_images"] = ""
            row["n_videos"] = ""
        else:
            row["description_html"] = ""
            row["n_images"] = str(n_images)
            row["n_videos"] = str(n_videos)
        rows.append(row)

        if i == 20:
            continue  # no image: extraction logs it and leaves the image columns empty
        if i == 17:
            data, ext = b"this is not an image\n", "png"  # undecodable: logged, columns empty
        elif i in fixtures:
            name, ext = fixtures[i]
            data = encode(fixture_image(name, 256), ext)
        else:
            kind = kinds[i % 4]
            w, h = int(rng.integers(140, 240)), int(rng.integers(110, 180))
            ext = "jpg" if i % 5 == 0 else "png"
            data = encode(synthetic_image(kind, w, h), ext)
        (OUT / "images" / f"{pid}.{ext}").write_bytes(data)
        key = hashlib.sha256(data).hexdigest()
        for table in (google, azure):
            k = int(rng.integers(0, 9))
            picks = rng.choice(len(LABELS), size=k, replace=False)
            table[key] = [{"label": LABELS[j], "confidence": round(float(rng.uniform(0.2, 0.99)), 4)}
                          for j in sorted(picks)]

    rows.append({**rows[0], "id": "p99", "goal_usd": "-5"})  # rejected at ingest

    fields = ["id", "goal_usd", "pledged_usd", "staff_pick", "country", "launched_at", "deadline", "blurb",
              "full_text", "description_html", "n_images", "n_videos", "backers"]
    with open(OUT / "projects.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for name, table in (("google", google), ("azure", azure)):
        with open(OUT / "annotations" / f"{name}.json", "w") as f:
            json.dump(dict(sorted(table.items())), f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main()
