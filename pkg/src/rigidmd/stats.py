"""Streaming block accumulation with bounded memory.

Samples are summed into consecutive chunks of ``chunk_size`` samples. Once
more than ``2 * n_blocks`` chunks exist, neighbours are merged pairwise and the
chunk size doubles, so memory stays O(n_blocks * width) for any run length
while the chunk boundaries remain a deterministic function of the sample
count. Standard errors come from regrouping full chunks into ``n_blocks``
contiguous blocks (batch means).
"""

import numpy as np


class BlockAccumulator:
    def __init__(self, width, n_blocks=10):
        if n_blocks < 2:
            raise ValueError("need at least two blocks")
        self.width = int(width)
        self.n_blocks = int(n_blocks)
        self.chunk_size = 1
        self.n_samples = 0
        self.sums = np.zeros((0, self.width))
        self.counts = np.zeros((0, self.width))
        self.filled = np.zeros(0, dtype=np.int64)  # samples per chunk

    def add(self, values, counts=1.0):
        if len(self.filled) == 0 or self.filled[-1] == self.chunk_size:
            if len(self.filled) == 2 * self.n_blocks:
                self._merge()
            self.sums = np.vstack([self.sums, np.zeros(self.width)])
            self.counts = np.vstack([self.counts, np.zeros(self.width)])
            self.filled = np.append(self.filled, 0)
        self.sums[-1] += values
        self.counts[-1] += counts
        self.filled[-1] += 1
        self.n_samples += 1

    def _merge(self):
        self.sums = self.sums[0::2] + self.sums[1::2]
        self.counts = self.counts[0::2] + self.counts[1::2]
        self.filled = self.filled[0::2] + self.filled[1::2]
        self.chunk_size *= 2

    def totals(self):
        return self.sums.sum(axis=0), self.counts.sum(axis=0)

    def means(self):
        s, c = self.totals()
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(c > 0, s / np.where(c > 0, c, 1.0), np.nan)

    def blocks(self):
        """(sums, counts, n_samples) of n_blocks contiguous groups of full chunks, or None."""
        full = self.filled == self.chunk_size
        nfull = int(np.count_nonzero(full))
        if nfull < self.n_blocks:
            return None
        groups = np.array_split(np.arange(nfull), self.n_blocks)
        s = np.array([self.sums[g].sum(axis=0) for g in groups])
        c = np.array([self.counts[g].sum(axis=0) for g in groups])
        n = np.array([self.filled[g].sum() for g in groups], dtype=float)
        return s, c, n

    def block_error(self, estimator):
        """Batch-means standard error of ``estimator(sums, counts)``; nan if too few samples."""
        b = self.blocks()
        if b is None:
            return np.nan
        s, c, n = b
        vals = np.array([estimator(s[k], c[k]) for k in range(len(n))], dtype=float)
        w = n / n.sum()
        mean = np.sum(w[:, None] * vals.reshape(len(n), -1), axis=0) if vals.ndim > 1 else np.sum(w * vals)
        g = len(n)
        dev = vals - mean
        if vals.ndim > 1:
            var = g / (g - 1) * np.sum((w**2)[:, None] * dev**2, axis=0)
        else:
            var = g / (g - 1) * np.sum(w**2 * dev**2)
        return np.sqrt(var)

    def state_dict(self):
        return {
            "width": np.array(self.width),
            "n_blocks": np.array(self.n_blocks),
            "chunk_size": np.array(self.chunk_size),
            "n_samples": np.array(self.n_samples),
            "sums": self.sums,
            "counts": self.counts,
            "filled": self.filled,
        }

    @classmethod
    def from_state(cls, d):
        obj = cls(int(d["width"]), int(d["n_blocks"]))
        obj.chunk_size = int(d["chunk_size"])
        obj.n_samples = int(d["n_samples"])
        obj.sums = np.array(d["sums"], dtype=float).reshape(-1, obj.width)
        obj.counts = np.array(d["counts"], dtype=float).reshape(-1, obj.width)
        obj.filled = np.array(d["filled"], dtype=np.int64)
        return obj


class ScalarSeries:
    """Named streaming averages of scalar observables with block errors."""

    def __init__(self, names, n_blocks=10):
        self.names = list(names)
        self.acc = BlockAccumulator(len(self.names), n_blocks)

    def add(self, values):
        self.acc.add(np.asarray(values, dtype=float))

    def results(self):
        mean = self.acc.means()
        err = self.acc.block_error(lambda s, c: s / c)
        if np.isscalar(err):
            err = np.full(len(self.names), err)
        return {k: (float(mean[i]), float(err[i])) for i, k in enumerate(self.names)}
