from .btree import BTree
from .graph import PageGraph

__all__ = ["BTree", "PageGraph"]
