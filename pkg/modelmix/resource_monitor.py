"""
Resource monitoring for experiment runs.

Attaches process CPU and resident memory to a span so the run ledger
records what each calibration or grid sweep cost.
"""
import psutil


class ResourceMonitor:
    """
    Monitor CPU and memory while an experiment runs.

    Usage:
        with mm.span("harness.fig4") as s:
            ...
            ResourceMonitor.capture(s.raw)
    """

    @classmethod
    def capture(cls, span, interval: float = 0.1):
        """
        Capture current resource usage and attach to span.

        Args:
            span: OpenTelemetry span to attach metrics to
            interval: CPU sampling window in seconds
        """
        for key, value in cls.get_current_usage(interval).items():
            span.set_attribute(f"system.{key}", value)

    @classmethod
    def get_current_usage(cls, interval: float = 0.1) -> dict:
        """
        Returns:
            Dictionary with cpu_percent and memory_mb (process RSS)
        """
        metrics = {}
        try:
            metrics["cpu_percent"] = round(psutil.cpu_percent(interval=interval), 1)
        except Exception:
            pass  # CPU monitoring is optional

        try:
            metrics["memory_mb"] = round(psutil.Process().memory_info().rss / 1024 / 1024, 1)
        except Exception:
            pass
        return metrics
