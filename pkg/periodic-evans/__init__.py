# Initialization file for the "periodic-evans" sources.
# Modules are flat and import each other directly; see setup.py.
