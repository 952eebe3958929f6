"""
File plumbing: console logging, CSV export, JSON configs with line
tracking, checksums and the run manifest.
"""

import hashlib
import json
import logging
import os
import platform
import re
import sys
from importlib import metadata as importlib_metadata

import numpy as np
import pandas as pd

from cg_errors import ConfigError

logger = logging.getLogger(__name__)

SUCCESS = 25
logging.addLevelName(SUCCESS, "SUCCESS")

LOG_FORMAT = "[%(asctime)s] [%(levelname)s] %(message)s"
LOG_DATEFMT = "%H:%M:%S"
FLOAT_FORMAT = "%.17g"


def setup_logging(level=logging.INFO):
    """Console handler producing '[HH:MM:SS] [LEVEL] message' lines"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_cg_console", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
    handler._cg_console = True
    root.addHandler(handler)
    root.setLevel(level)
    return handler


def log_success(message, *args):
    logger.log(SUCCESS, message, *args)


def write_csv(frame, path):
    """Comma-separated, header row, 17 significant digits, '\\n' line endings"""
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_curve_csv(curve, path):
    return write_csv(curve.to_frame(), path)


def write_ensemble_summary(curve, stderr, path):
    """tau,acf_hat,stderr for a scalar sample ACF"""
    frame = pd.DataFrame(
        {"tau": curve.lags, "acf_hat": curve.scalar(), "stderr": np.asarray(stderr)}
    )
    return write_csv(frame, path)


def sha256_file(path, chunk_size=1 << 16):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(chunk_size), b""):
            digest.update(block)
    return digest.hexdigest()


def config_hash(config):
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def key_line(text, key):
    """1-based line of the first '"key":' in the JSON text, or None"""
    match = re.search(r'"%s"\s*:' % re.escape(key), text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def load_json(path):
    """
    Parse a JSON document, returning (document, source_text).

    Syntax errors become ConfigError carrying the offending line.
    """
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from e
    try:
        return json.loads(text), text
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno) from e


def dump_json(obj, path):
    with open(path, "w") as f:
        json.dump(obj, f, indent=4)
        f.write("\n")
    return path


def library_versions():
    versions = {"python": platform.python_version()}
    for name in ("numpy", "scipy", "pandas", "numba"):
        try:
            versions[name] = importlib_metadata.version(name)
        except importlib_metadata.PackageNotFoundError:
            continue
    try:
        versions["markov-coarse-graining"] = importlib_metadata.version("markov-coarse-graining")
    except importlib_metadata.PackageNotFoundError:
        versions["markov-coarse-graining"] = "source"
    return versions


def ensure_output_dir(path):
    """Create the directory if needed; returns True when it was created"""
    if os.path.isdir(path):
        return False
    os.makedirs(path, exist_ok=True)
    logger.info("created output directory %s", path)
    return True


def emit_manifest(out_dir, metadata, files, name="manifest.json"):
    """
    Write the run manifest next to the outputs.

    `metadata` carries experiment, config echo, base_seed, status, wall time;
    per-file sha256 checksums are added here.
    """
    manifest = dict(metadata)
    manifest["config_hash"] = config_hash(metadata.get("config", {}))
    manifest["versions"] = library_versions()
    manifest["files"] = {
        os.path.basename(p): sha256_file(p) for p in sorted(files) if os.path.exists(p)
    }
    path = os.path.join(out_dir, name)
    dump_json(manifest, path)
    return path
