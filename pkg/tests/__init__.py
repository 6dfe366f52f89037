"""Test suite for simdm."""
