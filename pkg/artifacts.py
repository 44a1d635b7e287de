"""
💾 RUN ARTIFACTS
===============
Binary atoms files, raw field dumps with a text sidecar, CSV profiles,
JSON reports and the sqlite run ledger.

Atoms file layout (little-endian)::

    b"MIXLAB01" | u64 atom count | 32-byte config hash | records...

Each record is ``ATOM_DTYPE`` (109 bytes, packed).
"""

import json
import sqlite3
import struct
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from geometry import StateZ
from lab_config import get_logger
from waves import CubeSpec, WaveAtom, WaveFrequency

logger = get_logger(__name__)

MAGIC = b"MIXLAB01"
HEADER = struct.Struct("<8sQ32s")
ATOM_DTYPE = np.dtype([
    ("center", "<f8", (3,)),
    ("side", "<f8"),
    ("parity", "u1"),
    ("direction", "<f8", (5,)),
    ("freq", "<f8", (4,)),
    ("k", "<u4"),
])

PathLike = Union[str, Path]


class AtomsFileError(ValueError):
    """Malformed or truncated atoms file."""


@dataclass
class AtomsFile:
    atoms: List[WaveAtom]
    config_hash: bytes
    records: np.ndarray


def atoms_to_records(atoms: Sequence[WaveAtom]) -> np.ndarray:
    records = np.zeros(len(atoms), dtype=ATOM_DTYPE)
    for n, atom in enumerate(atoms):
        records[n]["center"] = atom.cube.center
        records[n]["side"] = atom.cube.side
        records[n]["parity"] = atom.cube.parity
        records[n]["direction"] = atom.direction.as_array()
        records[n]["freq"] = atom.freq.as_record()
        records[n]["k"] = atom.k
    return records


def records_to_atoms(records: np.ndarray) -> List[WaveAtom]:
    atoms = []
    for rec in records:
        cube = CubeSpec(tuple(rec["center"]), float(rec["side"]), int(rec["parity"]))
        atoms.append(WaveAtom(cube, StateZ.from_array(rec["direction"]),
                              WaveFrequency.from_record(rec["freq"]), int(rec["k"])))
    return atoms


def write_atoms(path: PathLike, atoms: Sequence[WaveAtom], config_hash: bytes) -> Path:
    if len(config_hash) != 32:
        raise ValueError("config hash must be a 32-byte sha256 digest")
    path = Path(path)
    records = atoms_to_records(atoms)
    with path.open("wb") as fh:
        fh.write(HEADER.pack(MAGIC, len(records), config_hash))
        fh.write(records.tobytes())
    logger.info("atoms file written", path=str(path), atoms=len(records))
    return path


def read_atoms(path: PathLike) -> AtomsFile:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise AtomsFileError(f"{path}: truncated header")
    magic, count, config_hash = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise AtomsFileError(f"{path}: bad magic {magic!r}")
    expected = HEADER.size + count * ATOM_DTYPE.itemsize
    if len(data) != expected:
        raise AtomsFileError(f"{path}: expected {expected} bytes for {count} atoms, found {len(data)}")
    records = np.frombuffer(data, dtype=ATOM_DTYPE, count=count, offset=HEADER.size)
    try:
        atoms = records_to_atoms(records)
    except ValueError as e:
        raise AtomsFileError(f"{path}: invalid atom record: {e}") from e
    return AtomsFile(atoms, config_hash, records)


# --------------------------------------------------------------------------
# Field dumps
# --------------------------------------------------------------------------

def field_grid(field, bbox: Tuple[float, float, float, float], t: float,
               n1: int, n2: int) -> np.ndarray:
    """Cell-centred samples of a field, shape (5, n2, n1)."""
    x1_lo, x1_hi, x2_lo, x2_hi = bbox
    x1 = x1_lo + (np.arange(n1) + 0.5) * (x1_hi - x1_lo) / n1
    x2 = x2_lo + (np.arange(n2) + 0.5) * (x2_hi - x2_lo) / n2
    X1, X2 = np.meshgrid(x1, x2)
    X = np.column_stack([X1.ravel(), X2.ravel(), np.full(X1.size, t)])
    return field.evaluate(X).T.reshape(5, n2, n1)


def dump_field_grid(field, stem: PathLike, bbox: Tuple[float, float, float, float], t: float,
                    n1: int, n2: int) -> Tuple[Path, Path]:
    stem = Path(stem)
    data = field_grid(field, bbox, t, n1, n2)
    raw = stem.with_suffix(".f64")
    hdr = stem.with_suffix(".hdr")
    raw.write_bytes(data.astype("<f8").tobytes())
    hdr.write_text("\n".join([
        "format = f64le",
        "components = rho v1 v2 m1 m2",
        f"shape = 5 {n2} {n1}",
        f"bbox = {bbox[0]!r} {bbox[1]!r} {bbox[2]!r} {bbox[3]!r}",
        f"t = {t!r}",
    ]) + "\n")
    return raw, hdr


def read_field_grid(stem: PathLike) -> Tuple[np.ndarray, Dict[str, str]]:
    stem = Path(stem)
    header = {}
    for line in stem.with_suffix(".hdr").read_text().splitlines():
        key, _, value = line.partition("=")
        header[key.strip()] = value.strip()
    shape = tuple(int(n) for n in header["shape"].split())
    data = np.fromfile(stem.with_suffix(".f64"), dtype="<f8").reshape(shape)
    return data, header


def dump_profile_csv(field, path: PathLike, x1: float, x2_range: Tuple[float, float],
                     t: float, n: int = 257) -> Path:
    """Vertical profile x2 -> (rho, v, m) at fixed x1 and t."""
    path = Path(path)
    x2 = np.linspace(x2_range[0], x2_range[1], n)
    Z = field.evaluate(np.column_stack([np.full(n, x1), x2, np.full(n, t)]))
    np.savetxt(path, np.column_stack([x2, Z]), delimiter=",",
               header="x2,rho,v1,v2,m1,m2", comments="", fmt="%.17g")
    return path


def write_json(path: PathLike, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, default=float))
    return path


def read_json(path: PathLike) -> dict:
    return json.loads(Path(path).read_text())


def append_csv_row(path: PathLike, header: Sequence[str], row: Sequence[object]) -> Path:
    path = Path(path)
    new = not path.exists()
    with path.open("a") as fh:
        if new:
            fh.write(",".join(header) + "\n")
        fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row) + "\n")
    return path


# --------------------------------------------------------------------------
# Run ledger
# --------------------------------------------------------------------------

class RunLedger:
    """sqlite history of runs and their passes."""

    def __init__(self, db_path: PathLike):
        self.db_path = str(db_path)
        self.init_database()

    def init_database(self):
        with self.get_connection() as conn:
            conn.executescript("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    config_hash TEXT,
                    started TIMESTAMP,
                    finished TIMESTAMP,
                    J_initial REAL,
                    J_final REAL,
                    passes INTEGER,
                    atoms INTEGER
                );

                CREATE TABLE IF NOT EXISTS passes (
                    run_id INTEGER,
                    pass_index INTEGER,
                    s REAL,
                    J_before REAL,
                    J_after REAL,
                    cubes INTEGER,
                    perturbed INTEGER,
                    rejected INTEGER,
                    PRIMARY KEY (run_id, pass_index),
                    FOREIGN KEY (run_id) REFERENCES runs (id)
                );

                CREATE INDEX IF NOT EXISTS idx_runs_hash ON runs(config_hash);
            """)

    @contextmanager
    def get_connection(self):
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        try:
            yield conn
            conn.commit()
        except Exception:
            conn.rollback()
            raise
        finally:
            conn.close()

    def log_run(self, report, started: datetime) -> int:
        """Store a RunReport and its passes; returns the run id."""
        with self.get_connection() as conn:
            cur = conn.execute("""
                INSERT INTO runs (config_hash, started, finished, J_initial, J_final, passes, atoms)
                VALUES (?, ?, ?, ?, ?, ?, ?)
            """, (report.config_hash, started.isoformat(), datetime.now().isoformat(),
                  report.J_initial, report.J_final, len(report.pass_reports), report.atoms))
            run_id = cur.lastrowid
            conn.executemany("""
                INSERT INTO passes (run_id, pass_index, s, J_before, J_after, cubes, perturbed, rejected)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            """, [(run_id, n, p.s, p.J_before, p.J_after, p.cubes_total, p.cubes_perturbed, int(p.rejected))
                  for n, p in enumerate(report.pass_reports)])
        return run_id

    def recent_runs(self, limit: int = 10) -> List[dict]:
        with self.get_connection() as conn:
            rows = conn.execute(
                "SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,)).fetchall()
        return [dict(row) for row in rows]

    def passes_for(self, run_id: int) -> List[dict]:
        with self.get_connection() as conn:
            rows = conn.execute(
                "SELECT * FROM passes WHERE run_id = ? ORDER BY pass_index", (run_id,)).fetchall()
        return [dict(row) for row in rows]
