from flowmap.monitoring import metrics

__all__ = ["metrics"]
