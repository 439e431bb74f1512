//! Generators for every wire message variant.

use cobot_intent::control::{InputSample, Scheme};
use cobot_intent::intent::{ActuatorFrame, ArrowColor, ArrowGlyph};
use cobot_intent::protocol::{FeedbackSource, Frame, Message, WirePose};
use cobot_intent::Phase;
use proptest::prelude::*;

pub fn finite() -> impl Strategy<Value = f64> {
    use proptest::num::f64::*;
    POSITIVE | NEGATIVE | NORMAL | SUBNORMAL | ZERO
}

fn arr3() -> impl Strategy<Value = [f64; 3]> {
    proptest::array::uniform3(finite())
}

fn pose() -> impl Strategy<Value = WirePose> {
    (arr3(), proptest::array::uniform4(finite()))
        .prop_map(|(position, orientation)| WirePose { position, orientation })
}

fn source() -> impl Strategy<Value = FeedbackSource> {
    prop_oneof![Just(FeedbackSource::Plan), Just(FeedbackSource::Assist)]
}

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::Cardinal), Just(Scheme::Adaptive)]
}

fn sample() -> impl Strategy<Value = InputSample> {
    (finite(), finite(), any::<bool>(), any::<bool>(), any::<u64>()).prop_map(
        |(axis1, axis2, mode_switch, grip_toggle, timestamp_ms)| InputSample {
            axis1,
            axis2,
            mode_switch,
            grip_toggle,
            timestamp_ms,
        },
    )
}

fn glyph() -> impl Strategy<Value = ArrowGlyph> {
    (arr3(), arr3(), prop_oneof![Just(ArrowColor::Green), Just(ArrowColor::Red)])
        .prop_map(|(origin, vector, color)| ArrowGlyph { origin, vector, color })
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (".*", scheme(), any::<bool>()).prop_map(|(scenario, scheme, autonomy)| Message::Hello {
            version: 1,
            scenario,
            scheme,
            autonomy,
        }),
        (
            proptest::array::uniform7(finite()),
            pose(),
            pose(),
            proptest::sample::select(Phase::ALL.to_vec()),
            any::<bool>(),
            any::<bool>()
        )
            .prop_map(|(joints, ee, block, phase, grasped, gripper_closed)| Message::SceneState {
                joints,
                ee,
                block,
                phase,
                grasped,
                gripper_closed,
            }),
        (proptest::array::uniform6(0.0f64..=1.0), any::<u64>(), source()).prop_map(|(i, stamp_ms, source)| {
            Message::Actuators {
                frame: ActuatorFrame {
                    intensities: i,
                    stamp_ms,
                },
                source,
            }
        }),
        (proptest::collection::vec(glyph(), 0..3), source())
            .prop_map(|(glyphs, source)| Message::Arrows { glyphs, source }),
        sample().prop_map(|sample| Message::Input { sample }),
        (any::<u32>(), ".*").prop_map(|(index, label)| Message::ModeSwitch { index, label }),
        ".*".prop_map(|name| Message::TaskEvent { name }),
        (any::<u32>(), finite()).prop_map(|(switch_count, elapsed_s)| Message::Metrics {
            switch_count,
            elapsed_s,
        }),
        ".*".prop_map(|reason| Message::Bye { reason }),
    ]
}

pub fn frame() -> impl Strategy<Value = Frame> {
    ("[a-z0-9-]{1,12}", any::<u64>(), any::<u64>(), message())
        .prop_map(|(session, seq, tick, message)| Frame { session, seq, tick, message })
}
