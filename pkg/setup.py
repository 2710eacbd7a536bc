from setuptools import setup

# Root-level manifest mirroring periodic-evans/setup.py so the project can be
# installed from the repository root; sources live in periodic-evans/.
setup(
    name='periodic-evans',
    version='0.3.0',
    package_dir={'': 'periodic-evans'},
    py_modules=[
        'bridge_constants',
        'fourier_coeffs',
        'fredholm_det',
        'hill_galerkin',
        'ode_evans',
        'periodic_evans',
        'spectral_locator',
        'sweep_worker',
    ],
    packages=['util'],
    install_requires=[
        'pyyaml',
        'rich',
        'tqdm',
        'numpy',
        'scipy',
    ],
    entry_points={
        'console_scripts': [
            'periodic-evans = periodic_evans:cli',
        ],
    },
)
