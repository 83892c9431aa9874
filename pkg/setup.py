""" Setup script for the spinlat Package."""
from setuptools import setup

setup(
    name='spinlat',
    version='0.1.0',
    author='spinlat developers',
    packages=['spinlat', 'spinlat.test'],
    package_data={
        "spinlat.test": [
            'test.cfg',
            'test_configs/*.cfg'
            ]
    },
    entry_points={
        'console_scripts': [
            'spinlat = spinlat.__main__:entrypoint_run'
        ]
    },
    license='3-clause BSD',
    description=(
        'Graphical construction, dependence sets and random current checks '
        'for finite-range spin dynamics on lattice boxes.'
    ),
    long_description=open('README.rst').read(),
    python_requires='>=3.7',
    install_requires=[
        # Arrays, random generators and the vectorized update tables.
        "numpy>=1.17",
        # Regularized incomplete gamma for series tail bounds.
        "scipy>=1.3",
        # Records the commit of the source tree in run manifests.
        "GitPython>=2.1.9"
    ]
)
