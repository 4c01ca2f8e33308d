from setuptools import setup, find_packages
import pathlib

here = pathlib.Path(__file__).parent.resolve()

# Get the long description from the README file
long_description = (here / "README.md").read_text(encoding="utf-8")

setup(
    name="amodalforge",
    version="0.1.0",
    description="Deterministic synthesis of amodal intra-class occlusion datasets, and COCO-style evaluation of amodal detections",
    long_description=long_description,
    long_description_content_type="text/markdown",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Image Recognition",
        "License :: OSI Approved :: BSD License",
    ],
    keywords="amodal segmentation, occlusion, synthetic data, average precision",
    packages=find_packages(exclude=["test", "scripts"]) + ['amodalforge.data', 'amodalforge.data.golden'],
    python_requires=">=3.9, <4",
    # numpy/scipy do the rasterisation, pandas the report tables, matplotlib the figures, Pillow the image files and tqdm the progress bars
    install_requires=["numpy",
                      "pandas",
                      "scipy>=1.6",
                      "matplotlib>=3.7.1",
                      "Pillow>=9.1",
                      "tqdm"],
    extras_require={
        "test": ["pytest"],
    },
    package_data={
        "amodalforge.data.golden": ["*.json"],
    },
    entry_points={
        "console_scripts": [
            "amodalforge=amodalforge.cli:main",
        ],
    },
)
