"""Lab layer: configuration, noise emulation, file outputs and the command line."""
