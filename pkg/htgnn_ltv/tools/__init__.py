"""Command definitions for the htgnn-ltv CLI."""
