import threading
from collections import deque
from typing import Deque, Generic, Optional, TypeVar

T = TypeVar('T')


class DroppingQueue(Generic[T]):
    """Thread-safe bounded queue that discards its oldest item instead of blocking producers.

    With `maxsize=1` the consumer always gets the most recent item; the number of
    discarded items is kept in `dropped`.
    """

    def __init__(self, maxsize: int = 1):
        if maxsize < 1:
            raise ValueError("maxsize must be at least 1")
        self._maxsize = maxsize
        self._items: Deque[T] = deque()
        self._lock = threading.Lock()
        self._not_empty = threading.Condition(self._lock)
        self.dropped = 0

    @property
    def maxsize(self) -> int:
        return self._maxsize

    def put(self, item: T) -> bool:
        """Add an item; returns True when an older item was dropped to make room."""
        dropped = False
        with self._lock:
            if len(self._items) >= self._maxsize:
                self._items.popleft()
                self.dropped += 1
                dropped = True
            self._items.append(item)
            self._not_empty.notify()
        return dropped

    def get(self, timeout: Optional[float] = None) -> Optional[T]:
        """Oldest item held, waiting up to `timeout` seconds; None when still empty."""
        with self._not_empty:
            if not self._items and timeout is not None:
                self._not_empty.wait(timeout)
            if not self._items:
                return None
            return self._items.popleft()

    def qsize(self) -> int:
        with self._lock:
            return len(self._items)

    def empty(self) -> bool:
        with self._lock:
            return not self._items
