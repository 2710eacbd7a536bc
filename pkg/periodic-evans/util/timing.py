# https://stackoverflow.com/a/1557906/4443082
import logging
from functools import reduce
from time import perf_counter as clock


def seconds_to_str(t: float) -> str:
    return "%d:%02d:%02d.%03d" % reduce(lambda ll, b: divmod(ll[0], b) + ll[1:], [(t * 1000,), 1000, 60, 60])


class Stopwatch:
    """Context manager logging the wall time of a block.

    Example:
        with Stopwatch("locate"):
            ...
    """
    def __init__(self, label: str) -> None:
        self.label = label
        self.start: float = 0.0
        self.elapsed: float = 0.0

    def __enter__(self) -> 'Stopwatch':
        self.start = clock()
        logging.info(f'[{self.label}] start')
        return self

    def __exit__(self, *exc) -> None:
        self.elapsed = clock() - self.start
        logging.info(f'[{self.label}] elapsed {seconds_to_str(self.elapsed)}')
