"""
Uncompressed COCO run-length encoding of binary masks. Pixels are scanned down each column, then across columns, and runs alternate between 0s and 1s starting with 0s.
"""
from dataclasses import dataclass

import numpy as np

from amodalforge.errors import CorruptRLEError


@dataclass(frozen=True)
class RleMask:
    """
    Run-length encoded mask. size is (height, width), counts the run lengths.
    """
    size: tuple
    counts: tuple

    def to_dict(self):
        return {'size': [int(s) for s in self.size], 'counts': [int(c) for c in self.counts]}

    @classmethod
    def from_dict(cls, d):
        return cls(size=tuple(int(s) for s in d['size']), counts=tuple(int(c) for c in d['counts']))

    def decode(self):
        return rle_decode(self)

    def area(self):
        """
        Number of set pixels, read off the odd runs without decoding.
        """
        return int(sum(self.counts[1::2]))


def rle_encode(mask):
    """
    Encode a binary mask.

    Parameters
    ----------
    mask : numpy array
        HxW array, nonzero entries are set.

    Returns
    -------
    rle : RleMask
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f'rle_encode expects a 2D mask, got shape {mask.shape}')
    flat = mask.ravel(order='F').astype(bool)
    if flat.size == 0:
        return RleMask(size=mask.shape, counts=())
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(size=tuple(int(s) for s in mask.shape), counts=tuple(int(c) for c in counts))


def rle_decode(rle):
    """
    Decode a run-length encoded mask.

    Parameters
    ----------
    rle : RleMask or dict
        The encoded mask.

    Returns
    -------
    mask : numpy array
        HxW boolean mask.
    """
    if isinstance(rle, dict):
        rle = RleMask.from_dict(rle)
    h, w = rle.size
    counts = np.asarray(rle.counts, dtype=np.int64)
    if np.any(counts < 0) or counts.sum() != h * w:
        raise CorruptRLEError(f'corrupt RLE: counts sum to {int(counts.sum())} for a {h}x{w} mask')
    values = np.arange(len(counts)) % 2 == 1
    flat = np.repeat(values, counts)
    return flat.reshape((h, w), order='F')
