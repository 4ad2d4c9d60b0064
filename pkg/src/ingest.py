# src/ingest.py
# Reader and writer for IDX image files (the MNIST training-set layout).
# Layout: big-endian magic 0x00000803, image count, rows, cols as 32-bit integers,
# followed by count * rows * cols unsigned-byte pixels.

import gzip
import logging
import os
import struct

import numpy as np

from src.errors import FormatError, OutputError

IDX_IMAGE_MAGIC = 0x00000803
IDX_HEADER = struct.Struct(">IIII")


def _opener(path):
    return gzip.open if str(path).endswith(".gz") else open


def read_idx_images(path):
    """
    Reads an IDX image file, optionally gzip-compressed.

    Args:
        path (str): Path to the file; a `.gz` suffix selects gzip decoding.

    Returns:
        ndarray: uint8 array of shape (count, rows, cols).

    Raises:
        FormatError: If the magic number is wrong or the payload is truncated.
    """
    logging.info(f"Reading IDX images from {path}")
    try:
        with _opener(path)(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        logging.error(f"Error: IDX file not found at {path}")
        raise
    except OSError as e:
        logging.error(f"Could not read IDX file {path}: {e}")
        raise FormatError(f"Unreadable IDX file {path}: {e}") from e

    if len(raw) < IDX_HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, count, rows, cols = IDX_HEADER.unpack_from(raw, 0)
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"{path}: bad magic number 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")

    expected = count * rows * cols
    available = len(raw) - IDX_HEADER.size
    if available < expected:
        raise FormatError(f"{path}: truncated payload, expected {expected} pixel bytes, found {available}")

    images = np.frombuffer(raw, dtype=np.uint8, count=expected, offset=IDX_HEADER.size)
    logging.info(f"Read {count} images of {rows} x {cols} pixels")
    return images.reshape(count, rows, cols)


def write_idx_images(images, path):
    """
    Writes a (count, rows, cols) uint8 array in IDX image layout.

    Args:
        images (ndarray): Pixel array; values must fit in an unsigned byte.
        path (str): Destination; a `.gz` suffix selects gzip encoding.
    """
    images = np.asarray(images)
    if images.ndim != 3:
        raise FormatError(f"IDX images must be a 3-D array, got shape {images.shape}")
    payload = images.astype(np.uint8).tobytes()
    header = IDX_HEADER.pack(IDX_IMAGE_MAGIC, *images.shape)

    output_dir = os.path.dirname(str(path))
    try:
        if output_dir and not os.path.exists(output_dir):
            os.makedirs(output_dir)
            logging.info(f"Created output directory: {output_dir}")
        with _opener(path)(path, "wb") as fh:
            fh.write(header + payload)
    except OSError as e:
        logging.error(f"Error writing IDX file {path}: {e}")
        raise OutputError(f"Could not write IDX file {path}: {e}", path) from e
    logging.info(f"Wrote {images.shape[0]} images to {path}")
