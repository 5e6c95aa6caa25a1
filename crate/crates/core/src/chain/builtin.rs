/// Chains available by name without a chains directory.
pub const BUILTIN_CHAINS: [&str; 5] = ["sax", "sax_untriggered", "lax", "perf", "recon"];

const SAX: &str = "\
[chain]
name = sax
reader = icsp
writer = icsp
gadgets = kspace_buffer, trigger, prepare_ref, fft_recon, image_buffer, inference, sax_analysis

[gadget.trigger]
trigger_dimension = slice

[gadget.image_buffer]
group_by = slice

[gadget.inference]
model = oracle_segmenter
device = cpu
";

const LAX: &str = "\
[chain]
name = lax
reader = icsp
writer = icsp
gadgets = image_buffer, inference, lax_analysis

[gadget.image_buffer]
group_by = series

[gadget.inference]
model = oracle_landmarks
device = cpu
";

const PERF: &str = "\
[chain]
name = perf
reader = icsp
writer = icsp
gadgets = image_buffer, inference, perf_analysis

[gadget.image_buffer]
group_by = series

[gadget.inference]
model = oracle_segmenter
device = cpu
";

const RECON: &str = "\
[chain]
name = recon
reader = icsp
writer = icsp
gadgets = kspace_buffer, trigger, prepare_ref, fft_recon

[gadget.trigger]
trigger_dimension = slice
";

pub fn builtin_chain(name: &str) -> Option<&'static str> {
    match name {
        "sax" => Some(SAX),
        "sax_untriggered" => Some(SAX_UNTRIGGERED),
        "lax" => Some(LAX),
        "perf" => Some(PERF),
        "recon" => Some(RECON),
        _ => None,
    }
}

const SAX_UNTRIGGERED: &str = "\
[chain]
name = sax_untriggered
reader = icsp
writer = icsp
gadgets = kspace_buffer, trigger, prepare_ref, fft_recon, image_buffer, inference, sax_analysis

[gadget.trigger]
trigger_dimension = none

[gadget.image_buffer]
group_by = slice

[gadget.inference]
model = oracle_segmenter
device = cpu
";
