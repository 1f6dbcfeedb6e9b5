"""Datasets with missing covariates, model parameters and index bookkeeping.

Covariate cells that are missing hold ``NaN`` in ``MaskedDataset.x`` and the
boolean ``mask`` is authoritative: consumers look at the mask, never at the
payload of a masked cell.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DomainError, IdentifiabilityError, ParseError

DEFAULT_MISSING_TOKENS = frozenset({"", "NA"})


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MaskedDataset:
    """Binary response, covariate matrix and missingness mask.

    Parameters
    ----------
    y : array_like, shape (n,)
        Response coded 0/1.
    x : array_like, shape (n, p)
        Covariates. Masked cells are overwritten with NaN.
    mask : array_like of bool, shape (n, p)
        ``True`` where the covariate is missing.
    columns : sequence of str, optional
        Covariate names, default ``x1 .. xp``.
    row_ids : array_like of int, optional
        Stable row identities (default ``0 .. n-1``). Random streams used
        by the fitting routines are keyed on these, so permuting rows
        leaves estimates unchanged.
    response_name : str
        Name of the response column.
    """

    y: np.ndarray
    x: np.ndarray
    mask: np.ndarray
    columns: tuple = ()
    row_ids: np.ndarray | None = None
    response_name: str = "y"
    check_identifiable: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d array")
        if mask.shape != x.shape:
            raise ValueError(f"mask shape {mask.shape} differs from x shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"y must have length {x.shape[0]}, got shape {y.shape}")
        if not np.all((y == 0) | (y == 1)):
            raise DomainError("response values must be 0 or 1")
        x = np.where(mask, np.nan, x)
        if not np.all(np.isfinite(x[~mask])):
            raise ValueError("observed covariates must be finite")
        n, p = x.shape
        columns = tuple(self.columns) if self.columns else tuple(f"x{j + 1}" for j in range(p))
        if len(columns) != p:
            raise ValueError(f"expected {p} column names, got {len(columns)}")
        row_ids = np.arange(n) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        if row_ids.shape != (n,) or len(np.unique(row_ids)) != n:
            raise ValueError("row_ids must be n distinct integers")
        if self.check_identifiable and n > 0:
            empty = np.flatnonzero(mask.all(axis=0))
            if empty.size:
                names = ", ".join(columns[j] for j in empty)
                raise IdentifiabilityError(f"column(s) with no observed entry: {names}")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "mask", _readonly(mask))
        object.__setattr__(self, "y", _readonly(y.astype(np.int8)))
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "row_ids", _readonly(row_ids))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def n_missing(self):
        return int(self.mask.sum())

    def take(self, rows):
        """Subset (or permute) rows, keeping their identities."""
        rows = np.asarray(rows)
        return MaskedDataset(
            y=self.y[rows], x=self.x[rows], mask=self.mask[rows], columns=self.columns,
            row_ids=self.row_ids[rows], response_name=self.response_name,
            check_identifiable=self.check_identifiable,
        )

    def select_columns(self, cols):
        cols = list(cols)
        return MaskedDataset(
            y=self.y, x=self.x[:, cols], mask=self.mask[:, cols],
            columns=tuple(self.columns[j] for j in cols), row_ids=self.row_ids,
            response_name=self.response_name, check_identifiable=self.check_identifiable,
        )

    def sorted_by_id(self):
        order = np.argsort(self.row_ids, kind="stable")
        if np.array_equal(order, np.arange(self.n)):
            return self
        return self.take(order)


@dataclass(frozen=True)
class Theta:
    """Regression coefficients (intercept first) and covariate Gaussian law."""

    beta: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        mu = np.asarray(self.mu, dtype=float).ravel()
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        p = mu.shape[0]
        if beta.shape != (p + 1,):
            raise ValueError(f"beta must have length {p + 1}, got {beta.shape[0]}")
        if sigma.shape != (p, p):
            raise ValueError(f"sigma must be {p}x{p}, got {sigma.shape}")
        object.__setattr__(self, "beta", _readonly(beta))
        object.__setattr__(self, "mu", _readonly(mu))
        object.__setattr__(self, "sigma", _readonly(sigma))

    @property
    def p(self):
        return self.mu.shape[0]

    def validate(self, tol=1e-10):
        """Raise ``ValueError`` unless sigma is symmetric positive definite."""
        if not np.allclose(self.sigma, self.sigma.T, rtol=0.0, atol=tol):
            raise ValueError("sigma is not symmetric")
        try:
            np.linalg.cholesky(self.sigma)
        except np.linalg.LinAlgError as exc:
            raise ValueError("sigma is not positive definite") from exc
        return self

    def to_dict(self):
        return {"beta": self.beta.tolist(), "mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(beta=d["beta"], mu=d["mu"], sigma=d["sigma"])


@dataclass(frozen=True)
class RowView:
    """Partition of one row's coordinates into observed and missing ones (0-based)."""

    obs_idx: np.ndarray
    mis_idx: np.ndarray
    x_obs: np.ndarray

    @property
    def p(self):
        return self.obs_idx.size + self.mis_idx.size

    @property
    def m(self):
        return self.mis_idx.size


def row_view(d, i):
    """Observed/missing partition of row ``i`` (0-based) of ``d``."""
    if not -d.n <= i < d.n:
        raise IndexError(f"row index {i} out of range for {d.n} rows")
    m = d.mask[i]
    obs = np.flatnonzero(~m)
    return RowView(obs_idx=obs, mis_idx=np.flatnonzero(m), x_obs=d.x[i, obs])


def make_row_view(x_row, mask_row):
    mask_row = np.asarray(mask_row, dtype=bool)
    obs = np.flatnonzero(~mask_row)
    return RowView(obs_idx=obs, mis_idx=np.flatnonzero(mask_row), x_obs=np.asarray(x_row, float)[obs])


@dataclass(frozen=True)
class Pattern:
    """Rows sharing one missingness pattern."""

    rows: np.ndarray
    obs_idx: np.ndarray
    mis_idx: np.ndarray


def group_patterns(mask):
    """Group row indices by missingness pattern.

    Patterns come out in a deterministic order (lexicographic on the mask
    bits) and rows within a pattern keep their order in ``mask``.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[0] == 0:
        return []
    uniq, inverse = np.unique(mask, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    out = []
    for k, pat in enumerate(uniq):
        out.append(Pattern(
            rows=np.flatnonzero(inverse == k),
            obs_idx=np.flatnonzero(~pat),
            mis_idx=np.flatnonzero(pat),
        ))
    return out


def column_means(x, mask):
    """Means of the observed entries of each column."""
    x = np.asarray(x, dtype=float)
    obs = ~np.asarray(mask, dtype=bool)
    counts = obs.sum(axis=0)
    return np.where(obs, x, 0.0).sum(axis=0) / np.maximum(counts, 1)


def mean_impute(x, mask, means=None):
    """Replace masked cells by column means (of observed entries unless given)."""
    if means is None:
        means = column_means(x, mask)
    return np.where(mask, np.broadcast_to(means, np.shape(x)), x)


def read_table(path, missing_tokens=DEFAULT_MISSING_TOKENS, delimiter=","):
    """Read a delimited text file with a header.

    Returns
    -------
    header : list of str
    cells : list of list of str
        Raw cell strings (stripped).
    lines : list of int
        1-based file line number of each data row.
    """
    missing_tokens = frozenset(missing_tokens)
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names in header", line=1)
        cells, lines = [], []
        for row in reader:
            if not row or (len(row) == 1 and row[0].strip() == "" and len(header) > 1):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line=reader.line_num)
            cells.append([c.strip() for c in row])
            lines.append(reader.line_num)
    return header, cells, lines


def parse_covariates(cells, lines, col_idx, missing_tokens=DEFAULT_MISSING_TOKENS):
    """Parse selected columns of raw cells into (x, mask)."""
    missing_tokens = frozenset(missing_tokens)
    n, p = len(cells), len(col_idx)
    x = np.full((n, p), np.nan)
    mask = np.zeros((n, p), dtype=bool)
    for i, row in enumerate(cells):
        for j, c in enumerate(col_idx):
            tok = row[c]
            if tok in missing_tokens:
                mask[i, j] = True
                continue
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(f"cannot parse {tok!r} as a number", line=lines[i]) from None
            if not np.isfinite(v):
                raise ParseError(f"non-finite value {tok!r}", line=lines[i])
            x[i, j] = v
    return x, mask


def load_csv(path, response, missing_tokens=DEFAULT_MISSING_TOKENS, delimiter=",",
             columns=None, row_id_column=None, check_identifiable=True):
    """Load a dataset from delimited text.

    Parameters
    ----------
    path : str or Path
    response : str
        Name of the 0/1 response column. Rows where it is missing are rejected.
    missing_tokens : set of str
        Cell contents treated as missing (default: empty string and ``"NA"``).
    columns : sequence of str, optional
        Covariates to keep, in this order. Default: every column except the
        response and the row id column, in file order.
    row_id_column : str, optional
        Integer column holding stable row identities.

    Raises
    ------
    ParseError
        Ragged row or unparsable number (message carries the line number).
    DomainError
        Response missing or outside {0, 1}.
    IdentifiabilityError
        A covariate column is entirely missing.
    """
    header, cells, lines = read_table(path, missing_tokens, delimiter)
    if response not in header:
        raise ParseError(f"response column {response!r} not in header", line=1)
    r = header.index(response)
    skip = {response} | ({row_id_column} if row_id_column else set())
    if columns is None:
        columns = [h for h in header if h not in skip]
    missing_cols = [c for c in columns if c not in header]
    if missing_cols:
        raise ParseError(f"columns not in header: {missing_cols}", line=1)
    col_idx = [header.index(c) for c in columns]

    y = np.empty(len(cells))
    tokens = frozenset(missing_tokens)
    for i, row in enumerate(cells):
        tok = row[r]
        if tok in tokens:
            raise DomainError(f"line {lines[i]}: response is missing")
        try:
            v = float(tok)
        except ValueError:
            raise DomainError(f"line {lines[i]}: response {tok!r} is not 0 or 1") from None
        if v not in (0.0, 1.0):
            raise DomainError(f"line {lines[i]}: response {tok!r} is not 0 or 1")
        y[i] = v
    x, mask = parse_covariates(cells, lines, col_idx, missing_tokens)
    row_ids = None
    if row_id_column is not None:
        k = header.index(row_id_column)
        try:
            row_ids = [int(row[k]) for row in cells]
        except ValueError as exc:
            raise ParseError(f"row id column {row_id_column!r}: {exc}") from None
    return MaskedDataset(y=y, x=x, mask=mask, columns=tuple(columns), row_ids=row_ids,
                         response_name=response, check_identifiable=check_identifiable)


def write_csv(d, path, missing_token="NA", delimiter=",", float_format="{!r}"):
    """Write ``d`` as delimited text, response column first.

    Floats are written with ``repr`` so a reload reproduces them exactly.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow([d.response_name, *d.columns])
        for i in range(d.n):
            cells = [missing_token if d.mask[i, j] else float_format.format(float(d.x[i, j]))
                     for j in range(d.p)]
            w.writerow([int(d.y[i]), *cells])
    return Path(path)
