"""
Gestor de trabajos en paralelo para generación, inferencia y evaluación por lotes
"""

import logging
import threading
import uuid
from concurrent.futures import Future, ThreadPoolExecutor
from datetime import datetime
from typing import Any, Callable, Dict, Iterable, List, Optional, TypeVar

from tqdm import tqdm

from config import APP_CONFIG

T = TypeVar("T")
U = TypeVar("U")


class JobManager:
    """Pool de hilos con registro de estado por trabajo; los resultados conservan el orden de entrada"""

    def __init__(self, max_workers: Optional[int] = None, progress: bool = False):
        self.max_workers = max(1, int(max_workers or APP_CONFIG["threads"]))
        self.progress = progress
        self.jobs: Dict[str, Dict[str, Any]] = {}
        self._lock = threading.Lock()
        self.logger = logging.getLogger(__name__)

    def _update_job_status(self, job_id: str, status: str, error: Optional[str] = None):
        with self._lock:
            job = self.jobs.setdefault(job_id, {"status": "pending", "created_at": datetime.now()})
            job["status"] = status
            if status in ("completed", "failed"):
                job["completed_at"] = datetime.now()
            if error is not None:
                job["error"] = error

    def _run(self, job_id: str, func: Callable[[T], U], item: T) -> U:
        self._update_job_status(job_id, "processing")
        try:
            result = func(item)
        except Exception as e:
            self.logger.error(f"Error en trabajo {job_id}: {e}")
            self._update_job_status(job_id, "failed", error=str(e))
            raise
        self._update_job_status(job_id, "completed")
        return result

    def map_ordered(self, func: Callable[[T], U], items: Iterable[T], desc: str = "jobs") -> List[U]:
        """Aplicar func a cada elemento; el primer error se propaga tras terminar los trabajos en curso"""
        items = list(items)
        if not items:
            return []
        job_ids = [f"{desc}-{uuid.uuid4().hex[:8]}" for _ in items]
        for job_id in job_ids:
            self._update_job_status(job_id, "pending")

        if self.max_workers == 1 or len(items) == 1:
            iterator = zip(job_ids, items)
            if self.progress:
                iterator = tqdm(iterator, total=len(items), desc=desc)
            return [self._run(job_id, func, item) for job_id, item in iterator]

        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            futures: List[Future] = [pool.submit(self._run, job_id, func, item)
                                     for job_id, item in zip(job_ids, items)]
            if self.progress:
                for future in tqdm(futures, total=len(futures), desc=desc):
                    future.exception()
            return [future.result() for future in futures]

    def get_queue_status(self) -> Dict[str, int]:
        """Conteo de trabajos por estado"""
        with self._lock:
            counts: Dict[str, int] = {}
            for job in self.jobs.values():
                counts[job["status"]] = counts.get(job["status"], 0) + 1
        return counts

    def failed_jobs(self) -> Dict[str, str]:
        with self._lock:
            return {job_id: job.get("error", "") for job_id, job in self.jobs.items()
                    if job["status"] == "failed"}
