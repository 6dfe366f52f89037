"""Command implementations behind the simdm CLI."""
