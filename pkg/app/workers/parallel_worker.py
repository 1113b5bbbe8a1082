"""
Worker für parallele Ausführung
Verteilt unabhängige Aufgaben (CV-Folds, Permutationen, Replikate) über joblib
"""

from typing import Any, Callable, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from app.config import get_default_threads
from app.core.logging_config import get_logger

logger = get_logger(__name__)


def resolve_n_jobs(threads: Optional[int] = None) -> int:
    """
    Ermittelt die Worker-Anzahl.
    Reihenfolge: explizites Argument (CLI-Flag) > TSGBT_THREADS > 1.
    Negative Werte folgen der joblib-Konvention (-1 = alle Kerne).
    """
    if threads is None or threads == 0:
        return get_default_threads()
    return int(threads)


def spawn_rng(seed: int, *key: int) -> np.random.Generator:
    """
    Unabhängiger Zufallsstrom für (seed, key).
    Derselbe Schlüssel liefert unabhängig von Thread-Zahl und Reihenfolge dieselben Zahlen.
    """
    return np.random.default_rng(
        np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    )


class ParallelWorker:
    """Führt eine Funktion über eine Aufgabenliste aus; Ergebnisse in Aufgabenreihenfolge"""

    def __init__(
        self,
        n_jobs: Optional[int] = None,
        backend: str = "loky",
        progress: Optional[Callable[[str], None]] = None
    ):
        self.n_jobs = resolve_n_jobs(n_jobs)
        self.backend = backend
        self.progress = progress

    def run(self, func: Callable[..., Any], tasks: Sequence[tuple]) -> List[Any]:
        """Führt func(*task) für jede Aufgabe aus"""
        tasks = list(tasks)
        if self.progress:
            self.progress(f"Starte {len(tasks)} Aufgaben mit {self.n_jobs} Worker(n)")
        if self.n_jobs == 1 or len(tasks) <= 1:
            results = [func(*task) for task in tasks]
        else:
            logger.debug(f"joblib: {len(tasks)} Aufgaben, n_jobs={self.n_jobs}, backend={self.backend}")
            results = Parallel(n_jobs=self.n_jobs, backend=self.backend)(
                delayed(func)(*task) for task in tasks
            )
        if self.progress:
            self.progress(f"{len(tasks)} Aufgaben abgeschlossen")
        return list(results)


def run_parallel(
    func: Callable[..., Any],
    tasks: Sequence[tuple],
    n_jobs: Optional[int] = None,
    backend: str = "loky"
) -> List[Any]:
    """Kurzform für ParallelWorker(n_jobs, backend).run(func, tasks)"""
    return ParallelWorker(n_jobs=n_jobs, backend=backend).run(func, tasks)
