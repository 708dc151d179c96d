"""Water-filling with and without a jammer, plus a small beam-hopping schedule."""

import numpy as np

from leocarto import allocation as alloc


def main():
    c = alloc.ChannelSet([1.0, 0.8, 0.5, 0.2], [0.5, 0.5, 1.0, 1.0], P=4.0, N=1.0)
    wf = alloc.waterfill(c.beta, c.sigma, c.P)
    mm = alloc.minimax_waterfill(c)
    cert = alloc.certify_saddle(c, mm)
    np.set_printoptions(precision=4, suppress=True)
    print("waterfill p", wf.p, "nu", round(wf.nu, 4), "capacity", round(wf.capacity, 4))
    print("minimax   p", mm.p, "n", mm.n, "capacity", round(mm.capacity, 4))
    print("levels nu", round(mm.nu, 4), "mu", round(mm.mu, 4),
          "mu-nu residual", f"{alloc.mu_nu_residual(c.beta, c.sigma, mm):.1e}")
    print("certification", cert)
    R = np.random.Generator(np.random.PCG64(0)).uniform(size=(4, 5))
    s = alloc.beam_hop(R, 2)
    print("beam hop schedule\n", s.schedule, "\nobjective", round(s.objective, 4))


if __name__ == "__main__":
    main()
