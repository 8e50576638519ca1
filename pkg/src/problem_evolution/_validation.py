"""Input validation helpers shared by the estimators and the functional API."""

import numpy as np


def check_image(img, name="img"):
    """Return ``img`` as a C-contiguous 2-D ``uint8`` array of 0/1 values.

    Raises
    ------
    ValueError
        If the array is not 2-D, is empty, or holds values other than 0 and 1.
    """
    arr = np.asarray(img)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one pixel, got shape {arr.shape}")
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    elif not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return np.ascontiguousarray(arr, dtype=np.uint8)


def check_layer_sizes(sizes):
    """Validate a layer-size list: at least two layers, 2 inputs, 1 output."""
    if isinstance(sizes, str):
        sizes = parse_layer_sizes(sizes)
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2:
        raise ValueError(f"need at least an input and an output layer, got {sizes}")
    if sizes[0] != 2 or sizes[-1] != 1:
        raise ValueError(f"layer sizes must start with 2 and end with 1, got {sizes}")
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    return sizes


def parse_layer_sizes(label):
    """Parse ``"2-4-3-1"`` into ``(2, 4, 3, 1)``."""
    try:
        return tuple(int(part) for part in label.strip().split("-"))
    except ValueError:
        raise ValueError(f"bad network label {label!r}; expected e.g. '2-4-3-1'") from None


def layer_label(sizes):
    return "-".join(str(s) for s in sizes)


def parse_dims(text):
    """Parse ``"20x20"`` (height x width) into ``(20, 20)``."""
    try:
        h, w = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"bad dims {text!r}; expected HxW, e.g. 20x20") from None
    if h < 1 or w < 1:
        raise ValueError(f"dims must be positive, got {text!r}")
    return h, w
