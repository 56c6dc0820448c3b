import pathlib
from setuptools import setup

HERE = pathlib.Path(__file__).parent
README = (HERE / "README.rst").read_text()

setup(
    name='scmixlab',
    version='1.0.0',
    description='SCMix augmentation and mean-teacher self-training lab for open compound domain adaptation',
    long_description=README,
    long_description_content_type="text/x-rst",
    keywords="domain adaptation segmentation augmentation classmix scmix mean teacher",
    license='GPLv3+',
    packages=['scmixlab'],
    python_requires='>=3.10',
    install_requires=[
        'numpy>=1.26',
        'scipy>=1.11',
        'pillow==11.1.0',
        'scikit-learn>=1.3',
        'pydantic>=2.5',
    ],
    extras_require={
        'test': ['pytest>=8.0', 'hypothesis>=6.90'],
    },
    entry_points={
        'console_scripts': ['scmixlab=scmixlab.cli:main'],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Typing :: Typed",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "Topic :: Scientific/Engineering :: Image Recognition",
        "License :: OSI Approved :: GNU General Public License v3 or later (GPLv3+)",
        "Programming Language :: Python :: 3 :: Only",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
)
