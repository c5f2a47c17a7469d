"""Shared fixtures: synthetic benchmark files and acceptance reporting.

The dataset fixtures write files that match the published row/column/class
statistics of each benchmark (iris 150x4/3, wine 178x13/3 with class counts
59/71/48, titanic 891x11/2 with 549/342 survival labels, and a full-size
60000x784 digit archive) so the loaders' validation paths run against
realistic inputs without any downloads.
"""
from __future__ import annotations

import csv
import struct
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for ident, description, status in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"criterion {ident} [{status}] {description}")


@pytest.fixture(scope="session")
def iris_file(tmp_path_factory) -> Path:
    rng = np.random.default_rng(101)
    path = tmp_path_factory.mktemp("data") / "iris.data"
    species = [
        ("Iris-setosa", [5.0, 3.4, 1.5, 0.2]),
        ("Iris-versicolor", [5.9, 2.8, 4.3, 1.3]),
        ("Iris-virginica", [6.6, 3.0, 5.6, 2.0]),
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for name, mean in species:
            rows = rng.normal(mean, [0.35, 0.3, 0.3, 0.2], size=(50, 4))
            for row in np.clip(np.round(rows, 1), 0.1, None):
                writer.writerow([f"{v:.1f}" for v in row] + [name])
    return path


@pytest.fixture(scope="session")
def wine_file(tmp_path_factory) -> Path:
    rng = np.random.default_rng(202)
    path = tmp_path_factory.mktemp("data") / "wine.data"
    counts = {1: 59, 2: 71, 3: 48}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for cls, count in counts.items():
            mean = 10.0 + 2.5 * cls + np.linspace(0, 6, 13)
            rows = rng.normal(mean, 1.0, size=(count, 13))
            for row in rows:
                writer.writerow([cls] + [f"{v:.2f}" for v in row])
    return path


@pytest.fixture(scope="session")
def titanic_file(tmp_path_factory) -> Path:
    rng = np.random.default_rng(303)
    path = tmp_path_factory.mktemp("data") / "titanic.csv"
    header = ["PassengerId", "Survived", "Pclass", "Name", "Sex", "Age",
              "SibSp", "Parch", "Ticket", "Fare", "Cabin", "Embarked"]
    survived = np.array([0] * 549 + [1] * 342)
    rng.shuffle(survived)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for pid, label in enumerate(survived, start=1):
            pclass = int(rng.integers(1, 4))
            sex = "female" if rng.random() < (0.65 if label else 0.2) else "male"
            age = "" if rng.random() < 0.2 else f"{rng.uniform(1, 75):.1f}"
            sibsp = int(rng.integers(0, 4))
            parch = int(rng.integers(0, 3))
            fare = f"{rng.uniform(5, 250):.4f}"
            cabin = "" if rng.random() < 0.77 else f"C{rng.integers(1, 120)}"
            embarked = rng.choice(["S", "C", "Q", ""], p=[0.7, 0.18, 0.1, 0.02])
            name = f"Lastname{pid}, {'Mrs.' if sex == 'female' else 'Mr.'} First{pid}"
            writer.writerow([pid, int(label), pclass, name, sex, age,
                             sibsp, parch, f"TK{100000 + pid}", fare, cabin,
                             embarked])
    return path


def _write_idx_images(path: Path, images: np.ndarray) -> None:
    count = images.shape[0]
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, count, 28, 28))
        fh.write(images.astype(np.uint8).tobytes())


def _write_idx_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, labels.shape[0]))
        fh.write(labels.astype(np.uint8).tobytes())


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory) -> Path:
    rng = np.random.default_rng(404)
    root = tmp_path_factory.mktemp("mnist")
    count = 60_000
    labels = np.tile(np.arange(10, dtype=np.uint8), count // 10)
    images = np.zeros((count, 784), dtype=np.uint8)
    # Digit-dependent stripe plus noise so reduction has structure to find.
    for digit in range(10):
        rows = labels == digit
        start = digit * 70
        images[rows, start:start + 40] = 40 + 18 * digit
    noise_cols = rng.integers(0, 784, size=12)
    images[:, noise_cols] = rng.integers(0, 255, size=(count, 12), dtype=np.uint8)
    _write_idx_images(root / "train-images-idx3-ubyte", images)
    _write_idx_labels(root / "train-labels-idx1-ubyte", labels)
    return root


@pytest.fixture(scope="session")
def iris_prepared(iris_file):
    """Iris prepared once at 4 qubits for reuse across training tests."""
    from bplab.data import DatasetSpec, load_raw, prepare

    raw = load_raw(DatasetSpec("iris", iris_file))
    return prepare(raw, num_qubits=4, seed=20240601)
