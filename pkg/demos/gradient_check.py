"""
Checking backpropagation by finite differences
==============================================

Central differences against the analytic gradient on a random model.
Rectifier and max-pool kinks make a fixed step unreliable, so the check
shrinks the step for any parameter whose perturbation flips an activation.
"""

import numpy as np

from spectropitch import cnn

rng = np.random.default_rng(0)
model = cnn.init_model(n_filters=3, seed=0)
image = rng.uniform(0, 1, (27, 64))
target = rng.uniform(0, 1, cnn.N_OUTPUTS)

report = cnn.grad_check_report(model, image, target, n_params=300)
print(f"checked {report['n_checked']} parameters, "
      f"{report['n_shrunk']} needed a smaller step, {report['n_skipped']} skipped")
print(f"max relative error {report['max_rel_error']:.2e}")

###############################################################################
# A deliberately broken gradient is caught.
def broken(model, images, targets):
    loss, grads = cnn.backward(model, images, targets)
    grads["conv_w"] = grads["conv_w"] * 2
    return loss, grads


print(f"with conv gradient doubled: {cnn.grad_check(model, image, target, backward_fn=broken):.2e}")
