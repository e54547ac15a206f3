"""Tests for drmfpca."""
