"""Instance files and CSV helpers.

An instance file is an uncompressed ``.npz`` archive (readable with
``numpy.load``) holding

===============  ======  ==============================================
``format``       str     ``"jointclust-instance/1"``
``config``       str     JSON object: n, r, p, epsilon, seed, distinct_rows
``block``        int8    r x r block matrix
``user_truth``   int64   length-n user partition
``movie_truth``  int64   length-n movie partition
``omega_rows``   int32   row index of every observed entry (row-major)
``omega_cols``   int32   column index of every observed entry
``omega_vals``   int8    observed value (+1 or -1) of every observed entry
===============  ======  ==============================================

The rating matrix is rebuilt from the block matrix and the partitions.
Zip members carry a fixed timestamp so equal instances give equal bytes.
"""

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .model import Instance, ModelConfig, expand_rating_matrix

FORMAT = "jointclust-instance/1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _npy_bytes(arr):
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_instance(instance, path):
    path = Path(path)
    cfg = instance.config
    config = {
        "n": cfg.n,
        "r": cfg.r,
        "p": cfg.p,
        "epsilon": cfg.epsilon,
        "seed": cfg.seed,
        "distinct_rows": cfg.distinct_rows,
    }
    rows, cols = np.nonzero(instance.observed)
    members = {
        "format": np.array(FORMAT),
        "config": np.array(json.dumps(config, sort_keys=True)),
        "block": instance.block.astype(np.int8),
        "user_truth": instance.user_truth.astype(np.int64),
        "movie_truth": instance.movie_truth.astype(np.int64),
        "omega_rows": rows.astype(np.int32),
        "omega_cols": cols.astype(np.int32),
        "omega_vals": instance.observed[rows, cols].astype(np.int8),
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in members.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, _npy_bytes(arr))
    return path


def load_instance(path):
    with np.load(Path(path), allow_pickle=False) as data:
        fmt = str(data["format"])
        if fmt != FORMAT:
            raise ValueError(f"{path}: unsupported instance format {fmt!r}")
        config = ModelConfig(**json.loads(str(data["config"])))
        block = data["block"]
        users = data["user_truth"]
        movies = data["movie_truth"]
        observed = np.zeros((config.n, config.n), dtype=np.int8)
        observed[data["omega_rows"], data["omega_cols"]] = data["omega_vals"]
    rating = expand_rating_matrix(block, users, movies)
    return Instance(config, block, users, movies, rating, observed)


def write_triplets_csv(observed, path_or_file):
    """Observed entries as ``row,col,value`` lines (0-based, row-major)."""
    rows, cols = np.nonzero(observed)
    vals = np.asarray(observed)[rows, cols]
    lines = ["row,col,value"]
    lines += [f"{i},{j},{v}" for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist())]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        Path(path_or_file).write_text(text)


def read_triplets_csv(path, n):
    observed = np.zeros((n, n), dtype=np.int8)
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if data.size:
        observed[data[:, 0], data[:, 1]] = data[:, 2]
    return observed


def write_pgm(path, pixels):
    """Binary (P5) 8-bit greyscale image."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
