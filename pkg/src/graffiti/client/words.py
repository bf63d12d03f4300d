from __future__ import annotations

import random
import string
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def dictionary() -> tuple[str, ...]:
    text = resources.files("graffiti").joinpath("data/words.txt").read_text("utf-8")
    return tuple(w for w in text.split() if w)


def random_title(rng: random.Random, attempt: int = 0) -> str:
    """A dictionary word, or 12 random lowercase alphanumerics after a collision."""
    words = dictionary()
    if attempt == 0 and words:
        return rng.choice(words).capitalize()
    return "".join(rng.choice(string.ascii_lowercase + string.digits) for _ in range(12))
