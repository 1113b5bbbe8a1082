# Workers Package

from .parallel_worker import ParallelWorker, resolve_n_jobs, run_parallel, spawn_rng
