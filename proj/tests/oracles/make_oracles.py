"""Independent reference values frozen into the C++ tests.

Run with numpy/scipy; every printed number is pasted verbatim into a test.
"""
import numpy as np
from scipy import linalg, stats

np.set_printoptions(precision=17)

# Linear noise schedule, T = 1000.
betas = np.linspace(1e-4, 0.02, 1000, dtype=np.float64)
ab = np.cumprod(1.0 - betas)
print("alpha_bar[1]    %.17g" % ab[0])
print("alpha_bar[500]  %.17g" % ab[499])
print("alpha_bar[1000] %.17g" % ab[999])

# Frechet distance between two explicit 4-D Gaussians.
ma = np.array([0.0, 1.0, 2.0, 3.0])
mb = np.array([0.5, 0.5, 1.5, 3.5])
sa = np.array([[2, 0.3, 0, 0.1], [0.3, 1, 0.2, 0], [0, 0.2, 1.5, 0.4], [0.1, 0, 0.4, 0.8]])
sb = np.array([[1, 0.1, 0.2, 0], [0.1, 2, 0, 0.3], [0.2, 0, 1, 0.1], [0, 0.3, 0.1, 1.2]])
covmean = linalg.sqrtm(sa @ sb).real
fd = np.sum((ma - mb) ** 2) + np.trace(sa + sb - 2 * covmean)
print("frechet_4d      %.17g" % fd)


# SSIM with every 8x8 window, uniform weights, unbiased variances.
def fixed_images():
    a = np.zeros((32, 32), dtype=np.float32)
    b = np.zeros((32, 32), dtype=np.float32)
    for i in range(32):
        for j in range(32):
            a[i, j] = np.float32(((i * 7 + j * 13) % 32) / 31.0)
            v = float(a[i, j]) + 0.1 * np.sin(i + 2.0 * j)
            b[i, j] = np.float32(min(1.0, max(0.0, v)))
    return a.astype(np.float64), b.astype(np.float64)


def ssim(a, b, win=8):
    c1, c2 = (0.01) ** 2, (0.03) ** 2
    vals = []
    for i in range(32 - win + 1):
        for j in range(32 - win + 1):
            x = a[i:i + win, j:j + win].ravel()
            y = b[i:i + win, j:j + win].ravel()
            mx, my = x.mean(), y.mean()
            vx, vy = x.var(ddof=1), y.var(ddof=1)
            cxy = np.cov(x, y, ddof=1)[0, 1]
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


a, b = fixed_images()
print("ssim_fixed      %.17g" % ssim(a, b))
mse = np.mean((a - b) ** 2)
print("psnr_fixed      %.17g" % (10 * np.log10(1.0 / mse)))

# Spearman on a tie-bearing fixed sample.
x = [3, 1, 4, 1, 5, 9, 2, 6, 5, 3]
y = [2, 7, 1, 8, 2, 8, 1, 8, 2, 8]
print("spearman_fixed  %.17g" % stats.spearmanr(x, y).correlation)

# ROC AUC on the documented four-point case via scikit-style pair counting.
s = [0.1, 0.4, 0.35, 0.8]
l = [0, 0, 1, 1]
pairs = [(p, n) for p, lp in zip(s, l) if lp == 1 for n, ln in zip(s, l) if ln == 0]
print("auc_four_point  %.17g" % (sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in pairs) / len(pairs)))

# Macro F1 on a 3-class, 6-sample case.
from sklearn.metrics import f1_score
pred = [0, 1, 2, 2, 1, 0]
true = [0, 1, 1, 2, 2, 2]
print("f1_macro_3class %.17g" % f1_score(true, pred, average="macro"))
