"""Tests for runtime configuration and the worker pool."""

import os
import threading
from typing import List

import pytest
from pytest_mock import MockerFixture

from drmfpca.exceptions import ValidationError
from drmfpca.runtime import parallel_map, resolve_threads


class TestResolveThreads:
    """Test worker count resolution."""

    def test_explicit_value_wins(self, mocker: MockerFixture) -> None:
        """Test that an explicit count overrides the environment."""
        mocker.patch.dict(os.environ, {"DRM_THREADS": "7"})
        assert resolve_threads(3) == 3

    def test_environment_value(self, mocker: MockerFixture) -> None:
        """Test reading DRM_THREADS."""
        mocker.patch.dict(os.environ, {"DRM_THREADS": "2"})
        assert resolve_threads() == 2

    def test_default_is_cpu_count(self, mocker: MockerFixture) -> None:
        """Test the fallback to the number of cores."""
        mocker.patch.dict(os.environ, {"DRM_THREADS": ""})
        mocker.patch("drmfpca.runtime.os.cpu_count", return_value=5)
        assert resolve_threads() == 5

    def test_bad_environment_value(self, mocker: MockerFixture) -> None:
        """Test that a non-integer DRM_THREADS is rejected."""
        mocker.patch.dict(os.environ, {"DRM_THREADS": "many"})
        with pytest.raises(ValidationError, match="DRM_THREADS"):
            resolve_threads()

    def test_nonpositive_value(self) -> None:
        """Test that zero workers is rejected."""
        with pytest.raises(ValidationError, match="positive"):
            resolve_threads(0)


class TestParallelMap:
    """Test the ordered parallel map."""

    def test_results_in_input_order(self) -> None:
        """Test that results align with inputs under concurrency."""
        items = list(range(50))
        assert parallel_map(lambda k: k * k, items, threads=4) == [k * k for k in items]

    def test_single_thread_runs_inline(self, mocker: MockerFixture) -> None:
        """Test that one worker never creates a pool."""
        executor = mocker.patch("drmfpca.runtime.ThreadPoolExecutor")
        seen: List[str] = []
        parallel_map(lambda k: seen.append(threading.current_thread().name), [1, 2], 1)
        executor.assert_not_called()
        assert seen == [threading.current_thread().name] * 2

    def test_empty_input(self) -> None:
        """Test mapping over nothing."""
        assert parallel_map(lambda k: k, [], threads=4) == []
