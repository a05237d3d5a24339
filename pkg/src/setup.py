# Copyright 2026 The paradop Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Setup file for paradop package."""

import setuptools

setuptools.setup(
    name='paradop',
    version='0.0.1',
    install_requires=[
        'absl-py>=0.12.0',
        'ml-collections',
        'numpy',
        'pandas',
        'scikit-learn',
    ],
    packages=setuptools.find_packages(),
    package_data={'paradop': ['test_data/*']},
    py_modules=['paradop_main'])
