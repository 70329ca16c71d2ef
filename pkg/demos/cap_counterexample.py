"""Non-injectivity on a beyond-hemisphere cap.

An odd pair of bumps at antipodal equator points integrates to nearly zero
over every geodesic of the large cap (each geodesic hits both bumps with
cancelling signs), while the same phantom on the flat disk produces O(1)
ray integrals.  The cancellation is geometric, not generic.
"""

from geoxray.metrics import make_metric
from geoxray.xray import counterexample_demo

k = 1.2
print(f"cap aperture k = {k}: equator circle at |x| = {1/k:.4f} (interior)")
rep = counterexample_demo(k)
print(
    f"  cap:    ||f+||_L1 = {rep['norm_f']:.5f}, max |If| = {rep['max_If']:.3e}, "
    f"ratio = {rep['ratio']:.4f}"
)

contrast = counterexample_demo(k, metric=make_metric("euclidean"))
print(
    f"  flat:   ||f+||_L1 = {contrast['norm_f']:.5f}, max |If| = {contrast['max_If']:.3e}, "
    f"ratio = {contrast['ratio']:.4f}"
)
print(f"  contrast factor: {contrast['ratio'] / rep['ratio']:.1f}x")
