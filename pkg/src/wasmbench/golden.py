"""Golden final digests per (seed, size class).

The committed table is produced by the native oracle pipeline and is
what every backend's final digest is verified against. Regenerate with
``wasmbench build --golden`` after changing the kernels (the change will
be visible in the artifact lockfile too).
"""

from __future__ import annotations

import json
from pathlib import Path

from .oracle import NativeOracle
from .payloads import PayloadSpec, SIZE_CLASSES, SizeClass, generate
from .steps import run_pipeline

GOLDEN_PATH = Path(__file__).parent / "data" / "golden_digests.json"

GOLDEN_SEEDS = (1, 42)


def _key(seed: int, sc: SizeClass) -> str:
    return f"{seed}/{sc.label}"


def load_table(path: Path | str = GOLDEN_PATH) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        return {}
    return json.loads(path.read_text())


def lookup(seed: int, sc: SizeClass, table: dict[str, str] | None = None) -> bytes | None:
    table = load_table() if table is None else table
    hexdigest = table.get(_key(seed, sc))
    return bytes.fromhex(hexdigest) if hexdigest else None


def generate_table(
    oracle: NativeOracle,
    seeds: tuple[int, ...] = GOLDEN_SEEDS,
    classes: tuple[SizeClass, ...] | None = None,
) -> dict[str, str]:
    classes = classes or tuple(SIZE_CLASSES.values())
    table = {}
    for seed in seeds:
        for sc in classes:
            payload = generate(PayloadSpec(seed, sc))
            result = run_pipeline(oracle.run_step, payload, sc)
            table[_key(seed, sc)] = result.digest.hex()
    return table


def write_table(table: dict[str, str], path: Path | str = GOLDEN_PATH) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    return path
