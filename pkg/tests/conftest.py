from __future__ import annotations

import pytest

from htapsim.storage import ColumnStore, RowStore, TableSchema


@pytest.fixture
def tiny_schema() -> TableSchema:
    return TableSchema("t", (("key", "int64"), ("v", "int64")))


@pytest.fixture
def tiny_stores(tiny_schema):
    row = RowStore(tiny_schema)
    col = ColumnStore(tiny_schema, chunk_count=4, chunk_capacity=16, n_vaults=4)
    return row, col
