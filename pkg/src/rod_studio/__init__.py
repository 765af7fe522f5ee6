__all__ = ["grounding", "fusion", "matching", "benchmark", "persistence", "cli"]
