import setuptools

with open("README.md", encoding="utf-8") as fh:
    long_description = fh.read()

setuptools.setup(
    name="srlsoa",
    version="0.1.0",
    license="Apache-2",
    url="https://github.com/MultisampledNight/srlsoa",

    author="MultisampledNight",
    author_email="contact@multisamplednight.com",

    description="Hyperspectral band selection with a sparse operational "
        "autoencoder",
    long_description=long_description,
    long_description_content_type="text/markdown",

    packages=setuptools.find_packages(exclude=["tests"]),
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Topic :: Scientific/Engineering :: Image Processing",
        "License :: OSI Approved :: Apache Software License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.20",
        "pandas",
        "Pillow",
        "psutil",
        "py-cpuinfo",
    ],
    extras_require={
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": ["srlsoa = srlsoa.cli:main"],
    },

    include_package_data=True,
    package_data={"srlsoa": ["resources/*.json"]},
)
