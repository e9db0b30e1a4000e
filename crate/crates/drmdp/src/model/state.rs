use std::fmt;

/// MDP state: price index, elapsed time, request priority.
///
/// `g == 0` means no request has been received in the current episode
/// and `s` counts steps since the episode started (saturating at w_hat).
/// `g >= 1` means a request with priority `g` is pending and `s` is the
/// signed offset from its target time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct State {
    pub price_idx: usize,
    pub s: i32,
    pub g: u32,
}

impl State {
    pub fn new(price_idx: usize, s: i32, g: u32) -> Self {
        Self { price_idx, s, g }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[P#{}, s={}, g={}]", self.price_idx, self.s, self.g)
    }
}

/// The two-element action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Off,
    On,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Off, Action::On];

    pub fn index(self) -> usize {
        match self {
            Action::Off => 0,
            Action::On => 1,
        }
    }

    pub fn from_index(idx: usize) -> Option<Action> {
        match idx {
            0 => Some(Action::Off),
            1 => Some(Action::On),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        match s {
            "off" => Some(Action::Off),
            "on" => Some(Action::On),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Off => write!(f, "off"),
            Action::On => write!(f, "on"),
        }
    }
}
