"""Multi-output regression datasets: per-output input/target blocks with CSV
serialisation and deterministic train/validation/test splitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionMismatch, RngStream

__all__ = ["Dataset", "save_dataset_csv", "load_dataset_csv", "split_dataset"]


@dataclass
class Dataset:
    """Observations for M outputs sharing one input space.

    Parameters
    ----------
    inputs : list of ndarray
        One (J_d, n) array per output; all share the input dimension n.
        Individual blocks may be empty, but not all of them.
    targets : list of ndarray
        One (J_d,) array per output, aligned with `inputs`.
    """

    inputs: list
    targets: list

    def __post_init__(self):
        self.inputs = [np.atleast_2d(np.asarray(x, dtype=float)) for x in self.inputs]
        self.targets = [np.asarray(y, dtype=float).ravel() for y in self.targets]
        self.validate()

    def validate(self):
        if len(self.inputs) != len(self.targets) or not self.inputs:
            raise DimensionMismatch("need one input block per target block")
        n = self.inputs[0].shape[1]
        for d, (x, y) in enumerate(zip(self.inputs, self.targets)):
            if x.shape[1] != n:
                raise DimensionMismatch(
                    f"output {d}: input dim {x.shape[1]} != {n}")
            if x.shape[0] != y.shape[0]:
                raise DimensionMismatch(
                    f"output {d}: {x.shape[0]} inputs vs {y.shape[0]} targets")
        if self.total_points == 0:
            raise DimensionMismatch("dataset has no observations at all")

    @property
    def n_outputs(self) -> int:
        return len(self.inputs)

    @property
    def input_dim(self) -> int:
        return self.inputs[0].shape[1]

    @property
    def sizes(self) -> list:
        return [x.shape[0] for x in self.inputs]

    @property
    def total_points(self) -> int:
        return int(sum(x.shape[0] for x in self.inputs))

    def stacked_targets(self) -> np.ndarray:
        """All targets as one vector, output blocks in order."""
        return np.concatenate(self.targets)

    def subset(self, index_lists) -> "Dataset":
        """New dataset keeping the given row indices of each output block."""
        return Dataset(
            inputs=[x[np.asarray(ix, dtype=int)] for x, ix in zip(self.inputs, index_lists)],
            targets=[y[np.asarray(ix, dtype=int)] for y, ix in zip(self.targets, index_lists)],
        )


def save_dataset_csv(ds: Dataset, path):
    """Write a dataset as CSV with header output_index,x_1..x_n,y."""
    n = ds.input_dim
    header = "output_index," + ",".join(f"x_{i + 1}" for i in range(n)) + ",y"
    rows = []
    for d in range(ds.n_outputs):
        for x, y in zip(ds.inputs[d], ds.targets[d]):
            rows.append([float(d)] + [float(v) for v in x] + [float(y)])
    np.savetxt(path, np.asarray(rows), delimiter=",", header=header,
               comments="", fmt="%.17g")


def load_dataset_csv(path) -> Dataset:
    """Read a dataset written by `save_dataset_csv`."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape[1] < 3:
        raise DimensionMismatch("dataset CSV needs output_index, x_1.. and y columns")
    out_idx = raw[:, 0].astype(int)
    n_outputs = int(out_idx.max()) + 1 if raw.size else 0
    inputs, targets = [], []
    for d in range(n_outputs):
        mask = out_idx == d
        inputs.append(raw[mask, 1:-1])
        targets.append(raw[mask, -1])
    return Dataset(inputs=inputs, targets=targets)


def split_dataset(ds: Dataset, n_train: int, n_val: int = 0,
                  n_test=None, rng: RngStream | None = None):
    """Split each output block into train/validation/test parts.

    Rows are drawn without replacement per output using `rng`; train and
    validation are always disjoint.  `n_test=None` keeps test empty;
    `n_test="all"` uses the complete dataset as the test set (it then
    overlaps the training rows — the usual protocol when a whole recorded
    trajectory is scored).

    Returns
    -------
    (train, val, test) : tuple of Dataset or None
        `val`/`test` are None when their requested size is zero/None.
    """
    if rng is None:
        rng = RngStream(0)
    want_all = isinstance(n_test, str) and n_test == "all"
    n_test_i = 0 if (n_test is None or want_all) else int(n_test)
    train_ix, val_ix, test_ix = [], [], []
    for d, j in enumerate(ds.sizes):
        need = n_train + n_val + n_test_i
        if need > j:
            raise DimensionMismatch(
                f"output {d}: split needs {need} rows, only {j} available")
        perm = rng.permutation(j)
        train_ix.append(np.sort(perm[:n_train]))
        val_ix.append(np.sort(perm[n_train:n_train + n_val]))
        test_ix.append(np.sort(perm[n_train + n_val:need]))
    train = ds.subset(train_ix)
    val = ds.subset(val_ix) if n_val > 0 else None
    if want_all:
        test = ds
    elif n_test_i > 0:
        test = ds.subset(test_ix)
    else:
        test = None
    return train, val, test
