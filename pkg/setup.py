from setuptools import setup, find_packages

with open('requirements.txt', 'r') as f:
    required_packages = [line.strip() for line in f.readlines() if line.strip() and not line.startswith('-e')]

setup(
    name="ppcd-gan",
    version="0.1.0",
    description="Progressive pruning and class-aware distillation for conditional GAN generators",
    author="nghiauet",
    author_email="nghiauet@local",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    py_modules=["main"],
    python_requires=">=3.8",
    install_requires=required_packages,
    entry_points={
        "console_scripts": [
            "ppcd=harness.cli:main",
        ],
    },
    extras_require={
        "dev": [
            "pytest",
            "black",
            "flake8",
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
    ],
)
