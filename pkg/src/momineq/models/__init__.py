from . import entry, intersection

__all__ = ["entry", "intersection"]
