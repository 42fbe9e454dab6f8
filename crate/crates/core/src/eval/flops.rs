use crate::numerics::conv_out_size;
use crate::params::ConvLayer;
use crate::renderer::Generator;
use crate::warp::WarpNet;

/// Multiply-accumulates of a convolution producing `h_out x w_out` pixels.
pub fn conv_macs(cin: usize, cout: usize, kh: usize, kw: usize, h_out: usize, w_out: usize) -> u64 {
    (cout * cin * kh * kw * h_out * w_out) as u64
}

pub fn affine_macs(inputs: usize, outputs: usize) -> u64 {
    (inputs * outputs) as u64
}

/// Analytic multiply-accumulate count of one forward pass.
pub trait CountFlops {
    /// MACs for an input of `h x w` pixels.
    fn count_flops(&self, h: usize, w: usize) -> u64;
}

impl CountFlops for ConvLayer {
    fn count_flops(&self, h: usize, w: usize) -> u64 {
        let ho = conv_out_size(h, self.kernel, self.stride, self.pad()).unwrap_or(0);
        let wo = conv_out_size(w, self.kernel, self.stride, self.pad()).unwrap_or(0);
        conv_macs(self.cin, self.cout, self.kernel, self.kernel, ho, wo)
    }
}

impl CountFlops for Generator {
    fn count_flops(&self, h: usize, w: usize) -> u64 {
        self.macs(h, w)
    }
}

impl CountFlops for WarpNet {
    fn count_flops(&self, h: usize, w: usize) -> u64 {
        self.macs(h, w)
    }
}

pub fn count_flops(model: &impl CountFlops, h: usize, w: usize) -> u64 {
    model.count_flops(h, w)
}

/// Generator cost over warp cost at `h x w`.
pub fn flop_ratio(generator: &Generator, warp: &WarpNet, h: usize, w: usize) -> f64 {
    count_flops(generator, h, w) as f64 / count_flops(warp, h, w) as f64
}
