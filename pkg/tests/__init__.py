"""Empty test init file."""
