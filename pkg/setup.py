from setuptools import setup, find_packages

VERSION = "0.1.0"

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="discrete_monge_ampere",
    version=VERSION,
    description="Barrier verification, a discrete Monge-Ampere solver and regularity experiments on convex polytopes",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=["Programming Language :: Python :: 3.9",
                 "Programming Language :: Python :: 3.10",
                 "Programming Language :: Python :: 3.11",
                 "License :: OSI Approved :: MIT License",
                 "Operating System :: OS Independent",
                 "Topic :: Scientific/Engineering :: Mathematics",
    ],
    package_dir={"": "src"},
    packages=find_packages(where="src"),
    package_data={"discrete_monge_ampere": ["presets/*.json", "schema/*.json"]},
    install_requires=["numpy>=1.22", "scipy>=1.9"],
    entry_points={"console_scripts": ["ma-toolkit = discrete_monge_ampere.main:main"]},
    python_requires=">=3.9",
)
