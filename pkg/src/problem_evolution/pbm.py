"""Plain (ASCII, ``P1``) PBM reading and writing."""

import numpy as np

from ._validation import check_image


def format_pbm(img, comment=None):
    img = check_image(img)
    height, width = img.shape
    lines = ["P1"]
    if comment:
        lines.extend(f"# {line}" for line in comment.splitlines())
    lines.append(f"{width} {height}")
    lines.extend(" ".join(str(int(v)) for v in row) for row in img)
    return "\n".join(lines) + "\n"


def write_pbm(img, path, comment=None):
    with open(path, "w") as fh:
        fh.write(format_pbm(img, comment))


def parse_pbm(text):
    """Parse plain PBM text into a ``uint8`` array (1 = black, as in the format)."""
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise ValueError("not a plain PBM file (missing P1 magic)")
    try:
        width, height = int(tokens[1]), int(tokens[2])
    except (IndexError, ValueError):
        raise ValueError("malformed PBM header") from None
    # plain PBM allows the pixel digits to be run together
    digits = "".join(tokens[3:])
    if len(digits) != width * height or set(digits) - {"0", "1"}:
        raise ValueError(f"expected {width * height} pixels of 0/1, got {len(digits)} characters")
    return np.frombuffer(digits.encode(), dtype=np.uint8).reshape(height, width) - ord("0")


def read_pbm(path):
    with open(path) as fh:
        return parse_pbm(fh.read())
