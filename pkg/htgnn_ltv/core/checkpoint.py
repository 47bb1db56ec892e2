"""Binary checkpoint container.

Layout: the magic ``HTGNN1``, a 64-character hex config digest, then repeated
entries of (uint32 name length, UTF-8 name, uint32 rank, rank × uint32 dims,
row-major float64 values), all little-endian.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..utils.exceptions import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"HTGNN1"
DIGEST_LENGTH = 64


def save_checkpoint(path: Union[str, Path], digest: str, state: dict[str, np.ndarray]) -> None:
    """Write named arrays to ``path``.

    Args:
        path: Destination file
        digest: Hex config digest (64 characters)
        state: Named arrays, written in insertion order
    """
    if len(digest) != DIGEST_LENGTH:
        raise CheckpointError(f"Config digest must have {DIGEST_LENGTH} hex characters, got {len(digest)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(digest.encode("ascii"))
        for name, values in state.items():
            array = np.ascontiguousarray(values, dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", array.ndim))
            if array.ndim:
                f.write(struct.pack(f"<{array.ndim}I", *array.shape))
            f.write(array.tobytes(order="C"))
    logger.info("Saved checkpoint with %d entries to %s", len(state), path)


def read_checkpoint(path: Union[str, Path]) -> tuple[str, dict[str, np.ndarray]]:
    """Read a checkpoint without checking its digest.

    Returns:
        Tuple of (digest, named arrays)

    Raises:
        CheckpointError: If the file is truncated or lacks the magic string
    """
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    offset = len(MAGIC)
    digest = raw[offset : offset + DIGEST_LENGTH].decode("ascii", errors="replace")
    offset += DIGEST_LENGTH
    state: dict[str, np.ndarray] = {}
    try:
        while offset < len(raw):
            (name_length,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            name = raw[offset : offset + name_length].decode("utf-8")
            offset += name_length
            (rank,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", raw, offset) if rank else ()
            offset += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
            offset += 8 * count
            state[name] = values.reshape(dims).astype(np.float64)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path} is truncated or corrupt: {e}") from e
    return digest, state


def load_checkpoint(path: Union[str, Path], expected_digest: str) -> dict[str, np.ndarray]:
    """Read a checkpoint and reject it when the digest does not match.

    Raises:
        CheckpointError: On digest mismatch or a malformed file
    """
    digest, state = read_checkpoint(path)
    if digest != expected_digest:
        raise CheckpointError(f"Checkpoint digest {digest[:12]}… does not match config digest {expected_digest[:12]}…")
    return state
