from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="hullwalk",
    version="0.1.0",
    author="Your Name",
    author_email="your.email@example.com",
    description="Random walks in high dimension and the convex hulls of their positions",
    long_description=long_description,
    long_description_content_type="text/markdown",
    url="https://github.com/YOUR_USERNAME/hullwalk",
    packages=find_packages(exclude=("tests", "examples", "examples.*")),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.8",
    install_requires=[
        "numpy>=1.21",
        "scipy>=1.9",
        "python-dotenv",
    ],
    entry_points={
        "console_scripts": [
            "hullwalk=hullwalk.cli:main",
        ],
    },
)
