import logging
import threading
import time
from typing import Dict, Optional

from app.config import Config

logger = logging.getLogger(__name__)


class ProgressMonitor:
    """Background thread that reports completed replication units"""

    def __init__(self, experiment: str, total: int, check_interval: float = Config.PROGRESS_INTERVAL):
        self.experiment = experiment
        self.total = total
        self.check_interval = check_interval
        self.completed = 0
        self.skipped = 0
        self.started_at: Optional[float] = None
        self.running = False
        self.monitor_thread = None
        self._lock = threading.Lock()
        self._stop = threading.Event()

    def start_monitoring(self):
        """Start the background progress reports"""
        if self.running:
            logger.info("Progress monitor is already running")
            return
        self.running = True
        self.started_at = time.monotonic()
        self._stop.clear()
        self.monitor_thread = threading.Thread(target=self._monitor_loop, daemon=True)
        self.monitor_thread.start()
        logger.info("Progress monitor started for %s (%d units)", self.experiment, self.total)

    def stop_monitoring(self):
        """Stop the background progress reports"""
        self.running = False
        self._stop.set()
        if self.monitor_thread:
            self.monitor_thread.join()
        self._report()
        logger.info("Progress monitor stopped")

    def unit_done(self, skipped: bool = False):
        with self._lock:
            self.completed += 1
            if skipped:
                self.skipped += 1

    def _monitor_loop(self):
        while not self._stop.wait(self.check_interval):
            try:
                self._report()
            except Exception as e:
                logger.error(f"Progress monitor error: {str(e)}")

    def _report(self):
        status = self.get_status()
        logger.info(
            "%s: %d/%d units done (%d resumed), %.1fs elapsed",
            self.experiment, status["completed"], status["total"], status["skipped"], status["elapsed"],
        )

    def get_status(self) -> Dict:
        """Get current progress"""
        with self._lock:
            completed, skipped = self.completed, self.skipped
        elapsed = time.monotonic() - self.started_at if self.started_at else 0.0
        return {
            "running": self.running,
            "experiment": self.experiment,
            "completed": completed,
            "skipped": skipped,
            "total": self.total,
            "fraction": completed / self.total if self.total else 1.0,
            "elapsed": elapsed,
        }


# Global progress monitor instance
_progress_monitor = None


def start_progress_monitoring(experiment: str, total: int, check_interval: Optional[float] = None) -> ProgressMonitor:
    """Start the global progress monitor, replacing a finished one"""
    global _progress_monitor
    if _progress_monitor is not None and _progress_monitor.running:
        _progress_monitor.stop_monitoring()
    interval = Config.PROGRESS_INTERVAL if check_interval is None else check_interval
    _progress_monitor = ProgressMonitor(experiment, total, interval)
    _progress_monitor.start_monitoring()
    return _progress_monitor


def stop_progress_monitoring():
    """Stop the global progress monitor, keeping its final counts"""
    global _progress_monitor
    if _progress_monitor and _progress_monitor.running:
        _progress_monitor.stop_monitoring()


def get_progress_status() -> Dict:
    """Get the status of the progress monitor"""
    if _progress_monitor:
        return _progress_monitor.get_status()
    return {"running": False, "message": "No experiment has run yet"}
