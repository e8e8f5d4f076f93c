#!/usr/bin/env python3
"""Writes the bundled fixtures under fixtures/. Output is deterministic."""

import argparse
import json
import math
import os
import struct

SIZE = 16

# noun -> RGB in [0, 255]
COLORS = {
    "sofa": (220, 40, 40),
    "lamp": (240, 220, 40),
    "chair": (40, 80, 230),
    "plant": (40, 200, 60),
    "television": (200, 60, 220),
    "table": (40, 220, 220),
}

# image id -> list of (noun, x1, y1, x2, y2) in pixels
SCENES = {
    "img0": [("sofa", 1, 8, 9, 15), ("lamp", 11, 1, 15, 7)],
    "img1": [("chair", 2, 2, 7, 9), ("plant", 10, 6, 15, 15)],
    "img2": [("television", 4, 1, 12, 6), ("table", 3, 9, 13, 15)],
    "img3": [("sofa", 6, 1, 15, 7), ("plant", 1, 9, 5, 15), ("table", 8, 10, 14, 15)],
    "img4": [("lamp", 1, 1, 5, 9), ("chair", 8, 8, 14, 15)],
    "img5": [("television", 9, 2, 15, 8), ("sofa", 1, 10, 11, 15), ("lamp", 2, 1, 6, 6)],
    "img6": [("plant", 6, 2, 10, 10), ("table", 1, 11, 8, 15)],
    "img7": [("chair", 1, 3, 6, 11), ("television", 9, 9, 15, 14), ("plant", 11, 1, 15, 6)],
}


def write_ppm(path, pixels):
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (SIZE, SIZE))
        for row in pixels:
            for rgb in row:
                f.write(bytes(rgb))


def render(objects):
    pixels = [[(24, 24, 24) for _ in range(SIZE)] for _ in range(SIZE)]
    for noun, x1, y1, x2, y2 in objects:
        for y in range(y1, y2):
            for x in range(x1, x2):
                pixels[y][x] = COLORS[noun]
    return pixels


def overfit_set(root):
    out = os.path.join(root, "overfit")
    os.makedirs(os.path.join(out, "images"), exist_ok=True)
    with open(os.path.join(out, "dataset.jsonl"), "w") as f:
        for image_id, objects in SCENES.items():
            write_ppm(os.path.join(out, "images", image_id + ".ppm"), render(objects))
            record = {
                "image_id": image_id,
                "width": SIZE,
                "height": SIZE,
                "objects": [
                    {"noun": n, "box": [x1 / SIZE, y1 / SIZE, x2 / SIZE, y2 / SIZE], "captions": [n]}
                    for n, x1, y1, x2, y2 in objects
                ],
            }
            f.write(json.dumps(record) + "\n")


def write_lze(path, rows, ids):
    with open(path, "wb") as f:
        f.write(b"LZE1")
        f.write(struct.pack("<II", len(rows), len(rows[0])))
        for row in rows:
            f.write(struct.pack("<%df" % len(row), *row))
        for i in ids:
            f.write(i.encode() + b"\n")


def unit(coeffs, dim):
    v = [0.0] * dim
    for axis, c in coeffs.items():
        v[axis] = c
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def retrieval_set(root):
    out = os.path.join(root, "retrieval")
    os.makedirs(out, exist_ok=True)
    names = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"]
    dim = len(names)
    basis = [unit({i: 1.0}, dim) for i in range(dim)]
    write_lze(os.path.join(out, "images.lze"), basis, ["img_" + n for n in names])
    write_lze(os.path.join(out, "queries.lze"), basis, ["q_" + n for n in names])
    with open(os.path.join(out, "gt.tsv"), "w") as f:
        for n in names:
            f.write("q_%s\timg_%s\n" % (n, n))


NAV_GRID = [
    "###############",
    "#......#......#",
    "#......#......#",
    "#......#......#",
    "#......#......#",
    "#......#......#",
    "#......#......#",
    "#......#......#",
    "#......#......#",
    "#......#......#",
    "#.............#",
    "#......#......#",
    "#......#...####",
    "#......#...#..#",
    "###############",
]

NAV_OBJECTS = [
    ("o1", "sofa", 2, 2),
    ("o2", "lamp", 12, 2),
    ("o3", "plant", 5, 12),
    ("o4", "television", 10, 6),
    ("o5", "chair", 13, 13),
    ("o6", "table", 3, 8),
]

NAV_AXES = {"sofa": 0, "lamp": 1, "plant": 2, "television": 3, "chair": 4, "table": 5}

# id, cell, heading (multiples of pi/2), embedding coefficients, visible nouns
NAV_MEMORY = [
    ("m1", (4, 2), 2, {0: 1.0}, ["sofa"]),
    ("m2", (9, 2), 0, {1: 1.0}, ["lamp"]),
    ("m3", (5, 8), 1, {2: 1.0, 5: 0.2}, ["plant", "table"]),
    ("m4", (9, 6), 2, {3: 1.0}, ["television"]),
    ("m5", (12, 9), -1, {3: 0.8, 6: 0.6}, ["television"]),
    ("m6", (1, 12), 0, {2: 0.6, 5: 0.8}, ["plant", "table"]),
    ("m7", (12, 13), 0, {4: 1.0}, ["chair"]),
    ("m8", (10, 12), 0, {4: 0.6, 7: 0.8}, ["chair"]),
    ("m9", (3, 5), 1, {5: 0.9, 7: math.sqrt(0.19)}, ["table"]),
    ("m10", (3, 1), 1, {5: 1.0}, ["table", "sofa"]),
]

NAV_QUERIES = [
    ("q1", "sofa", "Where can I sit down?"),
    ("q2", "lamp", "I need more light to read."),
    ("q3", "television", "Where can I watch the news?"),
    ("q4", "chair", "I am looking for a chair."),
    ("q5", "table", "Where can I put my cup?"),
    ("q6", "plant", "Which thing here needs watering?"),
]


def nav_set(root):
    out = os.path.join(root, "nav")
    os.makedirs(out, exist_ok=True)
    cell = 0.25
    dim = 8
    with open(os.path.join(out, "world.txt"), "w") as f:
        for row in NAV_GRID:
            f.write(row + "\n")
        f.write("\n")
        for oid, noun, x, y in NAV_OBJECTS:
            f.write("%s %s %d %d\n" % (oid, noun, x, y))
    with open(os.path.join(out, "memory.jsonl"), "w") as f:
        for mid, (cx, cy), quarter, _, nouns in NAV_MEMORY:
            record = {
                "image_id": mid,
                "width": SIZE,
                "height": SIZE,
                "pose": {"x": (cx + 0.5) * cell, "y": (cy + 0.5) * cell, "theta": quarter * math.pi / 2},
                "objects": [{"noun": n, "box": [0.25, 0.25, 0.75, 0.75], "captions": [n]} for n in nouns],
            }
            f.write(json.dumps(record) + "\n")
    write_lze(os.path.join(out, "memory.lze"), [unit(c, dim) for _, _, _, c, _ in NAV_MEMORY], [m[0] for m in NAV_MEMORY])
    write_lze(os.path.join(out, "queries.lze"), [unit({NAV_AXES[n]: 1.0}, dim) for _, n, _ in NAV_QUERIES],
              [q[0] for q in NAV_QUERIES])
    with open(os.path.join(out, "queries.tsv"), "w") as f:
        for qid, noun, sentence in NAV_QUERIES:
            f.write("%s\t%s\t%s\n" % (qid, noun, sentence))


STUB_TEMPLATES = [
    "Where is the {noun}?",
    "I am looking for {a} {noun}.",
    "Can you take me to the {noun}?",
    "Find the {noun} for me.",
    "Is there {a} {noun} in this room?",
    "Show me where the {noun} is.",
]

PROMPT_SCENES = {
    "room0": ["sofa", "lamp"],
    "room1": ["chair", "plant"],
    "room2": ["television", "table"],
    "room3": ["bed", "wardrobe"],
    "room4": ["sink", "mirror", "towel"],
    "room5": ["oven", "refrigerator"],
    "room6": ["bookshelf", "desk"],
    "room7": ["bathtub", "toilet"],
}


def prompt_set(root):
    out = os.path.join(root, "prompt")
    os.makedirs(out, exist_ok=True)
    nouns = []
    with open(os.path.join(out, "dataset.jsonl"), "w") as f:
        for image_id, objects in PROMPT_SCENES.items():
            record = {
                "image_id": image_id,
                "width": SIZE,
                "height": SIZE,
                "objects": [{"noun": n, "box": [0.25, 0.25, 0.75, 0.75], "captions": [n]} for n in objects],
            }
            f.write(json.dumps(record) + "\n")
            nouns.extend((n, image_id) for n in objects)
    with open(os.path.join(out, "queries.tsv"), "w") as q, open(os.path.join(out, "gt.tsv"), "w") as gt:
        for i, (noun, image_id) in enumerate(nouns):
            article = "an" if noun[0] in "aeiou" else "a"
            sentence = STUB_TEMPLATES[i % len(STUB_TEMPLATES)].format(noun=noun, a=article)
            q.write("p%02d\t%s\t%s\n" % (i, noun, sentence))
            gt.write("p%02d\t%s\n" % (i, image_id))


def augment_set(root):
    out = os.path.join(root, "augment")
    os.makedirs(out, exist_ok=True)
    lines = [
        {"image_id": "scan0", "width": 16, "height": 16,
         "objects": [{"noun": "sofa", "box": [0.1, 0.5, 0.6, 0.9]}, {"noun": "lamp", "box": [0.7, 0.1, 0.9, 0.4]}]},
        '{"image_id": "scan1", "width": 16, "height": ',
        {"image_id": "scan2", "width": 16, "height": 16,
         "objects": [{"noun": "sofa", "box": [0.2, 0.2, 0.8, 0.7]}, {"noun": "ceiling fan", "box": [0.3, 0.0, 0.7, 0.2]}]},
        {"image_id": "scan3", "width": 16, "height": 16, "objects": [{"noun": "chair", "box": [0.6, 0.2, 0.4, 0.9]}]},
    ]
    with open(os.path.join(out, "detections.jsonl"), "w") as f:
        for line in lines:
            f.write((line if isinstance(line, str) else json.dumps(line)) + "\n")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "fixtures"))
    args = parser.parse_args()
    overfit_set(args.out)
    retrieval_set(args.out)
    nav_set(args.out)
    prompt_set(args.out)
    augment_set(args.out)


if __name__ == "__main__":
    main()
