"""Downstream evaluators and calibration metrics.

An evaluator maps (train features, train labels, test features) to per-row
class-probability vectors. Three implementations share the contract:

* ``ReferenceForestEvaluator`` — bagged ensemble of 50 depth-limited trees,
  deterministic per seed; the built-in desk-scale stand-in for an external
  tabular model.
* ``CountingMockEvaluator`` — records call counts, returns train-frequency
  probabilities; used for cache accounting tests.
* ``ExternalEvaluator`` — newline-delimited JSON over a child process's stdio,
  one request in flight at a time.

``EvaluationHarness`` wraps an evaluator with the two evaluation protocols
(reward-loop vs report) and the shared fingerprint-keyed result cache.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, PipecleanError, RewardError
from .table import Table, stratified_split, subsample_stratified, table_fingerprint

REWARD_EVAL_MAX_ROWS = 512
HOLDOUT_FRACTION = 0.2


def ece(probs: np.ndarray, labels: np.ndarray, bins: int = 10) -> float:
    """Expected calibration error over equal-width confidence bins.

    Bin b covers [b/bins, (b+1)/bins) on the predicted-class probability,
    with the last bin closed at 1.0; empty bins contribute 0.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if probs.ndim != 2 or len(probs) == 0:
        raise ValueError("probs must be a non-empty (n, k) matrix")
    if len(probs) != len(labels):
        raise ValueError("probs and labels length mismatch")
    conf = probs.max(axis=1)
    pred = probs.argmax(axis=1)
    correct = (pred == labels).astype(np.float64)
    idx = np.minimum((conf * bins).astype(np.int64), bins - 1)
    total = 0.0
    n = len(labels)
    for b in range(bins):
        in_bin = idx == b
        n_b = int(in_bin.sum())
        if n_b == 0:
            continue
        total += (n_b / n) * abs(correct[in_bin].mean() - conf[in_bin].mean())
    return float(total)


@dataclass(frozen=True)
class EvaluationResult:
    accuracy: float
    ece: float
    probs: np.ndarray
    n_train: int
    n_test: int


def _mean_impute(train_X: np.ndarray, test_X: np.ndarray):
    """Fill nan by train-column means (0 for all-nan columns); evaluators must
    never see missing values."""
    train_X = np.asarray(train_X, dtype=np.float64).copy()
    test_X = np.asarray(test_X, dtype=np.float64).copy()
    mu = np.zeros(train_X.shape[1])
    for j in range(train_X.shape[1]):
        col = train_X[:, j]
        obs = col[~np.isnan(col)]
        mu[j] = obs.mean() if len(obs) else 0.0
    for X in (train_X, test_X):
        nan_r, nan_c = np.nonzero(np.isnan(X))
        X[nan_r, nan_c] = mu[nan_c]
    return train_X, test_X


class ReferenceForestEvaluator:
    """50-tree bagged forest (depth <= 12, sqrt-features splits), deterministic
    per seed; missing cells are mean-imputed from the train side."""

    name = "reference"

    def predict_proba(self, train_X, train_y, test_X, seed: int = 42) -> np.ndarray:
        from sklearn.ensemble import RandomForestClassifier

        train_y = np.asarray(train_y, dtype=np.int64)
        if len(np.unique(train_y)) < 2:
            raise DegenerateDataError("training data contains a single class")
        train_X, test_X = _mean_impute(train_X, test_X)
        clf = RandomForestClassifier(
            n_estimators=50, max_depth=12, max_features="sqrt",
            random_state=seed, n_jobs=1)
        clf.fit(train_X, train_y)
        raw = clf.predict_proba(test_X)
        k = int(train_y.max()) + 1
        probs = np.zeros((len(test_X), k))
        probs[:, clf.classes_] = raw
        return probs


class CountingMockEvaluator:
    """Deterministic trivial predictor; counts every call for cache accounting."""

    name = "mock"

    def __init__(self):
        self.calls = 0

    def predict_proba(self, train_X, train_y, test_X, seed: int = 42) -> np.ndarray:
        self.calls += 1
        train_y = np.asarray(train_y, dtype=np.int64)
        k = int(train_y.max()) + 1
        freq = np.bincount(train_y, minlength=k).astype(np.float64)
        freq /= freq.sum()
        return np.tile(freq, (len(test_X), 1))


class ExternalEvaluator:
    """Client for the evaluation sidecar: one newline-delimited JSON request per
    line over the child's stdin, one response per line back."""

    name = "external"

    def __init__(self, command):
        self.command = list(command)
        self._proc = None
        self._next_id = 0

    def _ensure_proc(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        return self._proc

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        self._proc = None

    @staticmethod
    def _encode_matrix(X) -> list:
        out = []
        for row in np.asarray(X, dtype=np.float64):
            out.append([None if np.isnan(v) else float(v) for v in row])
        return out

    def predict_proba(self, train_X, train_y, test_X, seed: int = 42) -> np.ndarray:
        proc = self._ensure_proc()
        self._next_id += 1
        req = {
            "proto": 1,
            "id": f"req-{self._next_id}",
            "train": {
                "features": self._encode_matrix(train_X),
                "labels": [int(v) for v in np.asarray(train_y)],
            },
            "test": {"features": self._encode_matrix(test_X)},
            "options": {"max_rows": REWARD_EVAL_MAX_ROWS, "seed": seed},
        }
        proc.stdin.write(json.dumps(req) + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            raise RewardError("evaluation sidecar closed its output stream")
        resp = json.loads(line)
        if resp.get("id") != req["id"]:
            raise RewardError(f"sidecar id mismatch: {resp.get('id')!r}")
        if resp.get("error"):
            raise RewardError(f"sidecar error: {resp['error']}")
        classes = [int(c) for c in resp["classes"]]
        raw = np.asarray(resp["probs"], dtype=np.float64)
        k = max(int(np.asarray(train_y).max()) + 1, max(classes) + 1)
        probs = np.zeros((len(test_X), k))
        probs[:, classes] = raw
        return probs


def make_evaluator(mode: str, sidecar_command=None):
    if mode == "reference":
        return ReferenceForestEvaluator()
    if mode == "mock":
        return CountingMockEvaluator()
    if mode == "external":
        if not sidecar_command:
            raise PipecleanError("external evaluator needs a sidecar command")
        return ExternalEvaluator(sidecar_command)
    raise PipecleanError(f"unknown evaluator mode {mode!r}")


# ---------------------------------------------------------------------------
# Harness: evaluation protocols + shared cache


def _evaluate_split(evaluator, train: Table, test: Table, seed: int) -> EvaluationResult:
    train_X, train_y = train.feature_matrix(), train.labels_as_codes()
    test_X, test_y = test.feature_matrix(), test.labels_as_codes()
    probs = evaluator.predict_proba(train_X, train_y, test_X, seed=seed)
    sums = probs.sum(axis=1)
    if not np.allclose(sums, 1.0, atol=1e-6):
        raise RewardError("evaluator returned probability rows not summing to 1")
    acc = float((probs.argmax(axis=1) == test_y).mean())
    return EvaluationResult(
        accuracy=acc, ece=ece(probs, test_y), probs=probs,
        n_train=train.n_rows, n_test=test.n_rows)


@dataclass
class EvaluationHarness:
    """Protocol layer over an evaluator.

    ``reward_eval`` is the in-loop protocol: the table is stratified-subsampled
    to at most 512 rows, split 80/20, and scored. ``report_eval`` scores the
    full table on an 80/20 split. Results are cached by (protocol, table
    fingerprint); ``calls`` counts actual evaluator invocations.
    """

    evaluator: object
    seed: int = 42
    cache: dict = field(default_factory=dict)
    calls: int = 0

    def _cached(self, protocol: str, t: Table, fn) -> EvaluationResult:
        key = (protocol, table_fingerprint(t))
        if key not in self.cache:
            self.cache[key] = fn()
            self.calls += 1
        return self.cache[key]

    def reward_eval(self, t: Table) -> EvaluationResult:
        def run():
            small = subsample_stratified(t, REWARD_EVAL_MAX_ROWS, self.seed)
            pair = stratified_split(small, HOLDOUT_FRACTION, self.seed)
            return _evaluate_split(self.evaluator, pair.train, pair.test, self.seed)
        return self._cached("reward", t, run)

    def report_eval(self, t: Table) -> EvaluationResult:
        def run():
            pair = stratified_split(t, HOLDOUT_FRACTION, self.seed)
            return _evaluate_split(self.evaluator, pair.train, pair.test, self.seed)
        return self._cached("report", t, run)
