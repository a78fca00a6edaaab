import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from toxspan.corpus import Dataset, Post


@pytest.fixture
def tiny_dataset() -> Dataset:
    posts = (
        Post("0", "Total rubbish", frozenset(range(6, 13))),
        Post("1", "fine point", frozenset()),
        Post("2", "what a pathetic troll", frozenset(range(7, 21))),
    )
    return Dataset(posts, "train")
