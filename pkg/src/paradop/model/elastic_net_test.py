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

"""Tests for elastic_net."""

from absl.testing import absltest
from absl.testing import parameterized
import numpy as np
from paradop.model import elastic_net
from sklearn import linear_model


def _random_problem(seed=0, n=200, f=5):
  rng = np.random.default_rng(seed)
  x = rng.normal(size=(n, f)) * rng.uniform(0.5, 20., size=f)
  w = rng.normal(size=f)
  y = x @ w + 4. + rng.normal(scale=0.5, size=n)
  return x, y


class ElasticNetTest(parameterized.TestCase):

  @parameterized.parameters((0.,), (0.5,), (1.,))
  def test_soft_threshold(self, threshold):
    self.assertEqual(elastic_net.soft_threshold(2., threshold), 2. - threshold)
    self.assertEqual(elastic_net.soft_threshold(-2., threshold),
                     -2. + threshold)
    self.assertEqual(elastic_net.soft_threshold(0.25, 1.), 0.)

  def test_recovers_line_without_regularization(self):
    x = np.linspace(0., 10., 30)[:, None]
    y = 2. * x[:, 0] + 3.
    model = elastic_net.ElasticNetRegressor(alpha=0., tol=1e-10).fit(x, y)
    self.assertAlmostEqual(model.coefficients[0], 2., delta=1e-3)
    self.assertAlmostEqual(model.intercept, 3., delta=1e-3)
    self.assertTrue(model.converged)

  def test_recovers_planted_coefficients(self):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(300, 3)) * [1., 50., 0.1]
    y = x @ np.array([2., -0.5, 30.]) + 7.
    model = elastic_net.ElasticNetRegressor(
        alpha=0., tol=1e-12, max_iter=10000).fit(x, y)
    np.testing.assert_allclose(model.coefficients, [2., -0.5, 30.],
                               atol=1e-3)
    self.assertAlmostEqual(model.intercept, 7., delta=1e-3)

  def test_objective_is_non_increasing(self):
    x, y = _random_problem()
    model = elastic_net.ElasticNetRegressor(alpha=0.3, l1_ratio=0.7).fit(x, y)
    history = np.array(model.objective_history)
    self.assertGreater(len(history), 1)
    self.assertTrue(np.all(np.diff(history) <= 1e-10 * np.abs(history[:-1])))

  @parameterized.named_parameters(
      ('mixed', 0.1, 0.5), ('lasso', 0.05, 1.), ('ridge', 1., 0.))
  def test_matches_scikit_learn_on_standardized_features(self, alpha,
                                                         l1_ratio):
    x, y = _random_problem(seed=3)
    z = (x - x.mean(axis=0)) / x.std(axis=0)
    ours = elastic_net.ElasticNetRegressor(
        alpha=alpha, l1_ratio=l1_ratio, tol=1e-12).fit(x, y)
    reference = linear_model.ElasticNet(
        alpha=alpha, l1_ratio=l1_ratio, tol=1e-10, max_iter=100000).fit(z, y)
    np.testing.assert_allclose(ours.standardized_coefficients,
                               reference.coef_, atol=1e-6)
    np.testing.assert_allclose(ours.predict(x), reference.predict(z),
                               atol=1e-5)

  def test_strong_lasso_zeroes_every_coefficient(self):
    x, y = _random_problem()
    model = elastic_net.ElasticNetRegressor(alpha=1e6, l1_ratio=1.).fit(x, y)
    np.testing.assert_array_equal(model.coefficients, np.zeros(5))
    self.assertAlmostEqual(model.intercept, y.mean())

  def test_constant_feature_gets_zero_coefficient(self):
    x, y = _random_problem()
    x[:, 2] = 5.
    model = elastic_net.ElasticNetRegressor().fit(x, y)
    self.assertEqual(model.coefficients[2], 0.)

  def test_constant_model(self):
    model = elastic_net.ElasticNetRegressor()
    model.coefficients = np.zeros(4)
    model.intercept = 7.
    np.testing.assert_array_equal(
        model.predict(np.random.default_rng(0).normal(size=(5, 4))),
        np.full(5, 7.))

  def test_round_trip(self):
    x, y = _random_problem()
    model = elastic_net.ElasticNetRegressor().fit(x, y)
    config = {'alpha': 0.1, 'l1_ratio': 0.5, 'tol': 1e-6, 'max_iter': 10000}
    restored = elastic_net.ElasticNetRegressor.from_dict(
        model.to_dict(), config)
    np.testing.assert_array_equal(restored.predict(x), model.predict(x))


if __name__ == '__main__':
  absltest.main()
