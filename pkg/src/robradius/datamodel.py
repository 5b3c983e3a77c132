"""Tabular data, specification parsing, and per-specification subsample
bookkeeping.

CSV cells that are empty or the literal ``NA`` are missing. Non-numeric
columns are treated as categorical and expanded into indicator columns at
load time (first observed level dropped, at most 200 levels per column).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

#: indicator-expansion guard against accidental high-dimensional fixed effects
MAX_CATEGORICAL_LEVELS = 200

#: subsample shares below this fraction trigger a diagnostic warning
DEFAULT_SHARE_FLOOR = 0.05

_MISSING_TOKENS = {"", "NA"}


class DataError(ValueError):
    """Malformed data, unknown column, or unestimable subsample."""


class SubsampleShareWarning(UserWarning):
    """A specification runs on a very small fraction of the sample."""


# ---------------------------------------------------------------------------
# filter predicates
# ---------------------------------------------------------------------------

_COMPARATORS = ("==", "!=", "<=", ">=", "<", ">")


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "()":
            tokens.append(c)
            i += 1
            continue
        two = text[i : i + 2]
        if two in ("==", "!=", "<=", ">="):
            tokens.append(two)
            i += 2
            continue
        if c in "<>":
            tokens.append(c)
            i += 1
            continue
        if c in "'\"":
            j = text.find(c, i + 1)
            if j < 0:
                raise DataError(f"unterminated string literal in filter: {text!r}")
            tokens.append(("str", text[i + 1 : j]))
            i = j + 1
            continue
        j = i
        while j < n and not text[j].isspace() and text[j] not in "()<>=!":
            j += 1
        tokens.append(("word", text[i:j]))
        i = j
    return tokens


class _FilterParser:
    """Recursive-descent parser for the minimal predicate grammar:
    comparisons of a column against a literal, combined with AND/OR
    (AND binds tighter), with optional parentheses."""

    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def parse(self):
        node = self.parse_or()
        if self.peek() is not None:
            raise DataError(f"unexpected trailing token in filter: {self.peek()!r}")
        return node

    def parse_or(self):
        node = self.parse_and()
        while self._is_word("or"):
            self.next()
            node = ("or", node, self.parse_and())
        return node

    def parse_and(self):
        node = self.parse_atom()
        while self._is_word("and"):
            self.next()
            node = ("and", node, self.parse_atom())
        return node

    def parse_atom(self):
        tok = self.peek()
        if tok == "(":
            self.next()
            node = self.parse_or()
            if self.next() != ")":
                raise DataError("unbalanced parentheses in filter")
            return node
        column = self.next()
        if not (isinstance(column, tuple) and column[0] == "word"):
            raise DataError(f"expected column name in filter, got {column!r}")
        op = self.next()
        if op not in _COMPARATORS:
            raise DataError(f"expected comparison operator in filter, got {op!r}")
        literal = self.next()
        if not isinstance(literal, tuple):
            raise DataError(f"expected literal in filter, got {literal!r}")
        kind, raw = literal
        if kind == "str":
            value = raw
        else:
            try:
                value = float(raw)
            except ValueError:
                value = raw
        return ("cmp", column[1], op, value)

    def _is_word(self, word):
        tok = self.peek()
        return isinstance(tok, tuple) and tok[0] == "word" and tok[1].lower() == word


def parse_filter(text):
    """Parse a filter expression; returns an AST usable by Dataset.evaluate."""
    tokens = _tokenize(text)
    if not tokens:
        raise DataError("empty filter expression")
    return _FilterParser(tokens).parse()


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Immutable column store with missingness encoded as NaN.

    ``numeric`` holds float arrays (including indicator expansions of
    categorical columns); ``categorical`` holds the raw string columns with
    missing cells as None; ``indicators`` maps a categorical column to its
    expanded indicator names.
    """

    numeric: dict
    categorical: dict
    indicators: dict
    row_count: int
    cluster_column: str | None = None

    def __post_init__(self):
        for name, col in self.numeric.items():
            if col.shape[0] != self.row_count:
                raise DataError(f"column {name!r} has inconsistent length")
        if self.cluster_column is not None:
            labels = self.cluster_labels()
            if any(v is None for v in labels):
                raise DataError("cluster column has missing cells")

    # -- construction ------------------------------------------------------

    @classmethod
    def from_columns(cls, columns, cluster_column=None):
        """Build from a mapping of name -> sequence (numbers or strings)."""
        numeric, categorical, indicators = {}, {}, {}
        row_count = None
        for name, values in columns.items():
            values = list(values)
            if row_count is None:
                row_count = len(values)
            parsed = _try_numeric(values)
            if parsed is not None and name != cluster_column:
                numeric[name] = parsed
            else:
                cells = [None if _is_missing(v) else str(v) for v in values]
                categorical[name] = cells
                if name != cluster_column:
                    _expand_indicators(name, cells, numeric, indicators)
        return cls(
            numeric=numeric,
            categorical=categorical,
            indicators=indicators,
            row_count=row_count or 0,
            cluster_column=cluster_column,
        )

    @classmethod
    def from_csv(cls, path, cluster_column=None):
        """Load a UTF-8 comma-delimited CSV with a header row."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            rows = list(reader)
        columns = {name: [] for name in header}
        for row in rows:
            if len(row) != len(header):
                raise DataError(f"{path}: ragged row with {len(row)} cells")
            for name, cell in zip(header, row):
                columns[name].append(cell)
        return cls.from_columns(columns, cluster_column=cluster_column)

    # -- access ------------------------------------------------------------

    def has_column(self, name) -> bool:
        return name in self.numeric or name in self.categorical

    def numeric_column(self, name) -> np.ndarray:
        if name not in self.numeric:
            raise DataError(f"unknown or non-numeric column: {name!r}")
        return self.numeric[name]

    def design_columns(self, name) -> list:
        """Resolve a control name to numeric column names (indicator
        expansion for categoricals)."""
        if name in self.numeric:
            return [name]
        if name in self.indicators:
            return list(self.indicators[name])
        raise DataError(f"unknown column: {name!r}")

    def cluster_labels(self) -> list:
        if self.cluster_column is None:
            raise DataError("no cluster column configured")
        if self.cluster_column in self.categorical:
            return list(self.categorical[self.cluster_column])
        col = self.numeric[self.cluster_column]
        if np.isnan(col).any():
            raise DataError("cluster column has missing cells")
        return [float(v) for v in col]

    def observed(self, name) -> np.ndarray:
        """Boolean mask of rows where the named column is observed."""
        if name in self.categorical:
            return np.array([v is not None for v in self.categorical[name]])
        return np.isfinite(self.numeric_column(name))

    def evaluate_filter(self, node) -> np.ndarray:
        """Evaluate a parsed filter; rows with missing cells fail."""
        kind = node[0]
        if kind == "and":
            return self.evaluate_filter(node[1]) & self.evaluate_filter(node[2])
        if kind == "or":
            return self.evaluate_filter(node[1]) | self.evaluate_filter(node[2])
        _, column, op, value = node
        if not self.has_column(column):
            raise DataError(f"unknown column in filter: {column!r}")
        if column in self.categorical:
            if op not in ("==", "!="):
                raise DataError(
                    f"operator {op!r} not supported for categorical column {column!r}"
                )
            cells = self.categorical[column]
            target = str(value)
            eq = np.array([v is not None and v == target for v in cells])
            if op == "==":
                return eq
            return np.array([v is not None and v != target for v in cells])
        col = self.numeric_column(column)
        if not isinstance(value, float):
            raise DataError(
                f"numeric column {column!r} compared against string {value!r}"
            )
        with np.errstate(invalid="ignore"):
            if op == "==":
                out = col == value
            elif op == "!=":
                out = col != value
            elif op == "<":
                out = col < value
            elif op == "<=":
                out = col <= value
            elif op == ">":
                out = col > value
            else:
                out = col >= value
        return out & np.isfinite(col)

    def take_rows(self, indices) -> "Dataset":
        """Row-resampled copy (used by the bootstrap)."""
        indices = np.asarray(indices)
        numeric = {k: v[indices] for k, v in self.numeric.items()}
        categorical = {
            k: [v[i] for i in indices] for k, v in self.categorical.items()
        }
        return Dataset(
            numeric=numeric,
            categorical=categorical,
            indicators=self.indicators,
            row_count=indices.shape[0],
            cluster_column=self.cluster_column,
        )


def _is_missing(value) -> bool:
    if value is None:
        return True
    if isinstance(value, float):
        return np.isnan(value)
    return isinstance(value, str) and value.strip() in _MISSING_TOKENS


def _try_numeric(values):
    out = np.empty(len(values))
    for i, v in enumerate(values):
        if _is_missing(v):
            out[i] = np.nan
            continue
        try:
            out[i] = float(v)
        except (TypeError, ValueError):
            return None
    return out


def _expand_indicators(name, cells, numeric, indicators):
    levels = []
    seen = set()
    for v in cells:
        if v is not None and v not in seen:
            seen.add(v)
            levels.append(v)
    if len(levels) > MAX_CATEGORICAL_LEVELS:
        raise DataError(
            f"categorical column {name!r} has {len(levels)} levels "
            f"(cap {MAX_CATEGORICAL_LEVELS})"
        )
    names = []
    for level in levels[1:]:  # first observed level dropped
        col = np.array(
            [np.nan if v is None else float(v == level) for v in cells]
        )
        colname = f"{name}={level}"
        numeric[colname] = col
        names.append(colname)
    indicators[name] = names


# ---------------------------------------------------------------------------
# specifications and masks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Specification:
    """One regression recipe: outcome, treatment, controls, and sample."""

    label: str
    outcome: str
    treatment: str
    controls: tuple = ()
    weights: str | None = None
    row_filter: str | None = None
    is_main: bool = False
    must_equal_main: bool = False

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(self.controls))
        if self.outcome in self.controls:
            raise DataError(f"{self.label}: outcome appears among controls")
        if self.treatment in self.controls:
            raise DataError(f"{self.label}: treatment appears among controls")
        if self.is_main and self.must_equal_main:
            raise DataError(f"{self.label}: main specification cannot pin itself")

    @classmethod
    def from_dict(cls, payload) -> "Specification":
        known = {
            "label", "outcome", "treatment", "controls", "weights",
            "row_filter", "is_main", "must_equal_main",
        }
        unknown = set(payload) - known
        if unknown:
            raise DataError(f"unknown specification fields: {sorted(unknown)}")
        return cls(
            label=payload["label"],
            outcome=payload["outcome"],
            treatment=payload["treatment"],
            controls=tuple(payload.get("controls", ())),
            weights=payload.get("weights"),
            row_filter=payload.get("row_filter"),
            is_main=bool(payload.get("is_main", False)),
            must_equal_main=bool(payload.get("must_equal_main", False)),
        )

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "outcome": self.outcome,
            "treatment": self.treatment,
            "controls": list(self.controls),
            "weights": self.weights,
            "row_filter": self.row_filter,
            "is_main": self.is_main,
            "must_equal_main": self.must_equal_main,
        }


@dataclass(frozen=True)
class SubsampleMask:
    """Rows a specification actually uses, with their count and indices."""

    included: np.ndarray
    n_rows: int

    @property
    def n_included(self) -> int:
        return int(self.included.sum())

    @property
    def index_set(self) -> np.ndarray:
        return np.flatnonzero(self.included)


def regressor_count(dataset: Dataset, spec: Specification) -> int:
    """Columns of the full design: intercept, treatment, expanded controls."""
    k = 2
    for name in spec.controls:
        k += len(dataset.design_columns(name))
    return k


def build_mask(dataset: Dataset, spec: Specification) -> SubsampleMask:
    """Rows where every referenced variable is observed and the filter passes.

    Raises when a referenced column is unknown or when fewer rows survive
    than the design needs (regressor count + 2).
    """
    for name in (spec.outcome, spec.treatment, *spec.controls):
        if not dataset.has_column(name):
            raise DataError(f"{spec.label}: unknown column {name!r}")
    if spec.weights is not None and not dataset.has_column(spec.weights):
        raise DataError(f"{spec.label}: unknown column {spec.weights!r}")

    included = dataset.observed(spec.outcome) & dataset.observed(spec.treatment)
    for name in spec.controls:
        included &= dataset.observed(name)
    if spec.weights is not None:
        included &= dataset.observed(spec.weights)
    if spec.row_filter is not None:
        included &= dataset.evaluate_filter(parse_filter(spec.row_filter))

    mask = SubsampleMask(included=included, n_rows=dataset.row_count)
    floor = regressor_count(dataset, spec) + 2
    if mask.n_included < floor:
        raise DataError(
            f"{spec.label}: only {mask.n_included} usable rows, "
            f"need at least {floor}"
        )
    return mask


def subsample_share(mask: SubsampleMask, n: int,
                    floor: float = DEFAULT_SHARE_FLOOR) -> float:
    """Fraction of the pooled sample a specification uses; warns below the
    configurable floor."""
    if n <= 0:
        raise ValueError("total observation count must be positive")
    share = mask.n_included / n
    if share < floor:
        warnings.warn(
            f"subsample share {share:.4f} below floor {floor:.2f}",
            SubsampleShareWarning,
            stacklevel=2,
        )
    return share


def validate_study_specs(specs) -> int:
    """Require exactly one main specification; returns its index."""
    mains = [i for i, s in enumerate(specs) if s.is_main]
    if len(mains) != 1:
        raise DataError(
            f"exactly one main specification required, found {len(mains)}"
        )
    return mains[0]
