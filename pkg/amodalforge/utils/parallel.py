"""
Contains ordered_map, a thread pool map that returns results in input order, used wherever work is split per scene or per image.
"""
import itertools
from concurrent.futures import ThreadPoolExecutor

from tqdm import tqdm


def ordered_map(func, items, workers=1, progress=False, desc=None, total=None, chunkSize=None):
    """
    Lazily apply func to every item and yield the results in the order of items, whatever the number of workers.

    Parameters
    ----------
    func : callable
        Function of one argument. Must not depend on shared mutable state.
    items : iterable
        Inputs to func. Consumed in chunks so long streams are not held in memory.
    workers : int, optional
        Number of threads. With 1 (the default) func is called in the current thread.
    progress : bool, optional
        Show a tqdm progress bar. The default is False.
    desc : string, optional
        Description for the progress bar.
    total : int, optional
        Number of items, for the progress bar.
    chunkSize : int, optional
        Number of items submitted at once. The default is 8 per worker.

    Yields
    ------
    result
        func(item) for each item, in input order.
    """
    bar = tqdm(total=total, desc=desc, disable=not progress)
    try:
        if workers <= 1:
            for item in items:
                yield func(item)
                bar.update(1)
            return
        chunkSize = chunkSize or 8 * workers
        iterator = iter(items)
        with ThreadPoolExecutor(max_workers=workers) as executor:
            while True:
                chunk = list(itertools.islice(iterator, chunkSize))
                if not chunk:
                    break
                # executor.map keeps input order
                for result in executor.map(func, chunk):
                    yield result
                    bar.update(1)
    finally:
        bar.close()
