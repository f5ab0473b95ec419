"""
Dataset-wide attack sweeps
Per-sample attacks are pure, so they can run on a thread pool; result order follows the input
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

from src.attacks.attack_types import AdversarialExample
from src.logger import ProgressLog, get_logger

logger = get_logger(__name__)

T = TypeVar("T")


def attack_all(attack: Callable[[T], AdversarialExample], items: Sequence[T],
               threads: int = 1) -> List[AdversarialExample]:
    """Apply `attack` to every item; threads > 1 uses a thread pool"""
    logger.debug(f"Attacking {len(items)} inputs on {threads} thread(s)")
    progress = ProgressLog(logger, "attacked", len(items))

    def run(item: T) -> AdversarialExample:
        example = attack(item)
        progress.step()
        return example

    if threads <= 1:
        return [run(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, items))
