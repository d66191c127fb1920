#!/usr/bin/env python3
"""Regenerates the bundled toy dataset under data/toy.

Three 8x8 images over a 6-class vocabulary, with semantic and panoptic
ground truth, a manifest, and mock fixtures for the chat, segment and embed
services. Output is deterministic.
"""

import json
import math
import random
import struct
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "data" / "toy"
IGNORE = 65535

VOCAB = ["wall", "floor", "sofa", "dog", "potted plant", "window"]
THINGS = ["sofa", "dog", "potted plant"]
LETTER = {"W": 0, "F": 1, "S": 2, "D": 3, "P": 4, "N": 5, ".": IGNORE}

LAYOUTS = {
    "a": [
        "WWWWWNNW",
        "WWWWWNNW",
        "WWWWWWWW",
        "SSSSSWWW",
        "SSSSSWDD",
        "FFFFFFDD",
        "FFFFFFFF",
        "FFFFFFFF",
    ],
    "b": [
        "WWWWWWWW",
        "WWWWWWWW",
        "WPWWWWPW",
        "WPWWWWPW",
        "FPFDDFPF",
        "FFFDDFFF",
        "FFFFFFF.",
        "FFFFFFFF",
    ],
    "c": [
        "NNWWWWNN",
        "NNWWWWNN",
        "WWWWWWWW",
        "SSSWWPWW",
        "SSSFFPDD",
        "FFFFFFDD",
        "FFFFFFFF",
        "FFFFFFFF",
    ],
}

COLORS = {
    0: (200, 190, 170),
    1: (120, 80, 40),
    2: (150, 30, 40),
    3: (90, 70, 50),
    4: (40, 140, 50),
    5: (150, 200, 240),
    IGNORE: (0, 0, 0),
}

REASONS = {
    "wall": "wall | structure | building element | flat vertical surface; painted finish; straight corners",
    "floor": "floor | structure | ground surface | horizontal surface; wooden planks",
    "couch": "couch | furniture | seating | soft cushions; armrests; fabric upholstery; low backrest",
    "sofa": "sofa | furniture | seating | soft cushions; armrests; fabric upholstery; low backrest",
    "dog": "dog | living being | animal | four legs; fur; tail",
    "blorb": "blorb | object | unknown | shapeless form",
    "potted plant": "potted plant | living being | plant | green leaves; clay pot; soil; thin stems; upright shape",
    "window": "window | structure | opening | glass pane",
}

CHAT = {
    "a": {
        "description": "A living room with a couch against the wall, a dog resting on the wooden floor "
        "and a small window high on the wall.",
        "classes": "classes: wall; floor; couch; dog; blorb\nThese are the classes I can see.",
        "reasons": "\n".join(REASONS[n] for n in ["wall", "floor", "couch", "dog", "blorb"]),
    },
    "b": {
        "description": "A bright hallway with two potted plants near the walls and a dog on the floor.",
        "classes": "classes: wall; floor; potted plant; dog",
        # The first answer omits the dog; the retry completes it.
        "reasons": [
            "\n".join(REASONS[n] for n in ["wall", "floor", "potted plant"]),
            "\n".join(REASONS[n] for n in ["wall", "floor", "potted plant", "dog"]),
        ],
    },
    "c": {
        "description": "A corner of a lounge with two windows, a sofa, a potted plant and a dog.",
        "classes": "classes: wall; floor; sofa; dog; potted plant; window",
        "reasons": "\n".join(REASONS[n] for n in ["wall", "floor", "sofa", "dog", "potted plant", "window"]),
    },
}

GENERIC = {
    "window": "window | structure | opening | glass pane; frame; sill",
    "potted plant": "potted plant | living being | plant | green leaves; clay pot; soil",
}


def ids_of(name):
    return [[LETTER[ch] for ch in row] for row in LAYOUTS[name]]


def pgm16(rows):
    h, w = len(rows), len(rows[0])
    out = bytearray(f"P5\n{w} {h}\n65535\n".encode())
    for row in rows:
        for v in row:
            out += struct.pack(">H", v)
    return bytes(out)


def write_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")


def write_label_map(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pgm16(rows))
    sidecar = {"ignore_id": IGNORE, "labels": {str(i): n for i, n in enumerate(VOCAB)}}
    write_json(path.with_suffix(".labels.json"), sidecar)


def panoptic(rows):
    """Stuff and things alike: one segment per 4-connected region of a label."""
    h, w = len(rows), len(rows[0])
    seg = [[0] * w for _ in range(h)]
    segments = []
    for y in range(h):
        for x in range(w):
            cls = rows[y][x]
            if cls == IGNORE or seg[y][x]:
                continue
            sid = len(segments) + 1
            segments.append({"segment_id": sid, "class_id": cls})
            stack = [(y, x)]
            seg[y][x] = sid
            while stack:
                cy, cx = stack.pop()
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seg[ny][nx] and rows[ny][nx] == cls:
                        seg[ny][nx] = sid
                        stack.append((ny, nx))
    return seg, segments


def ppm(rows, seed):
    rng = random.Random(seed)
    h, w = len(rows), len(rows[0])
    out = bytearray(f"P6\n{w} {h}\n255\n".encode())
    for row in rows:
        for v in row:
            for c in COLORS[v]:
                out.append(max(0, min(255, c + rng.randint(-12, 12))))
    return bytes(out)


def embed_table():
    dim = 8
    table = {}
    for i, name in enumerate(VOCAB):
        v = [0.0] * dim
        v[i] = 1.0
        table[name] = v
    couch = [0.0] * dim
    couch[VOCAB.index("sofa")] = 0.83
    couch[6] = math.sqrt(1 - 0.83**2)
    table["couch"] = couch
    blorb = [0.0] * dim
    blorb[VOCAB.index("dog")] = 0.31
    blorb[7] = math.sqrt(1 - 0.31**2)
    table["blorb"] = blorb
    return {"model": "fixture-embed-8d", "dimension": dim, "vectors": table}


def mock_dir(name, chat_images):
    d = ROOT / name
    write_json(
        d / "chat.json",
        {
            "model": "fixture-lmm",
            "images": [dict(image=f"../images/{k}.ppm", **v) for k, v in chat_images.items()],
            "generic": GENERIC,
        },
    )
    write_json(
        d / "segment.json",
        {
            "inside": 4,
            "outside": -4,
            "distractor": 1,
            "jitter": 0.25,
            "images": [{"id": k, "image": f"../images/{k}.ppm", "regions": f"../gt/{k}.pgm"} for k in LAYOUTS],
        },
    )
    write_json(d / "embed.json", embed_table())


def main():
    for i, name in enumerate(LAYOUTS):
        rows = ids_of(name)
        (ROOT / "images").mkdir(parents=True, exist_ok=True)
        (ROOT / "images" / f"{name}.ppm").write_bytes(ppm(rows, 1000 + i))
        write_label_map(ROOT / "gt" / f"{name}.pgm", rows)
        seg, segments = panoptic(rows)
        (ROOT / "panoptic").mkdir(parents=True, exist_ok=True)
        (ROOT / "panoptic" / f"{name}.pgm").write_bytes(pgm16(seg))
        write_json(ROOT / "panoptic" / f"{name}.json", {"raster": f"{name}.pgm", "segments": segments})

    def record(k):
        return {
            "id": k,
            "image": f"images/{k}.ppm",
            "gt_semantic": f"gt/{k}.pgm",
            "gt_panoptic": f"panoptic/{k}.json",
        }

    write_json(
        ROOT / "manifest.json",
        {"name": "toy-6", "vocabulary": VOCAB, "things": THINGS, "images": [record(k) for k in LAYOUTS]},
    )
    # Image c only: the chat fixture observes every vocabulary class there.
    write_json(
        ROOT / "manifest_full.json",
        {"name": "toy-6", "vocabulary": VOCAB, "things": THINGS, "images": [record("c")]},
    )

    mock_dir("mock", CHAT)
    garbage = {
        k: {**v, "classes": "I am not sure which of those categories apply here."} for k, v in CHAT.items()
    }
    mock_dir("mock_fallback", garbage)


if __name__ == "__main__":
    main()
