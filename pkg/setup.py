import os
from distutils.core import setup

from setuptools import find_packages

_package_name = "vlmseg"

here = os.path.abspath(os.path.dirname(__file__))

setup(
    # information
    name="vlmseg",
    version="0.1.0",
    packages=find_packages(include=(_package_name, "%s.*" % _package_name)),
    description="A desk-scale semi-supervised segmentation pipeline with vision-language pseudo-label purification.",
    long_description_content_type="text/markdown",
    author="vlmseg contributors",
    author_email="any@example.com",
    license="MIT",
    keywords="semi-supervised segmentation pseudo-label",
    # environment
    python_requires=">=3.9",
    install_requires=[
        "pydantic>=1.10.2,<2",
        "devtools>=0.10.0",
        "numpy>=1.22.4,<2",
        "scipy>=1.10.0",
        "requests>=2.28.0",
    ],
    entry_points={"console_scripts": ["vlmseg=vlmseg.cli:main"]},
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
)
