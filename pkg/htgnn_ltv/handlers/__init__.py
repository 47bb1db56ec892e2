"""Handler modules for the experiment commands."""
