use std::collections::HashSet;

use crate::corpus::Sentence;

const AFFIX_LENGTHS: [usize; 3] = [1, 2, 3];
const NEIGHBOR_OFFSETS: [isize; 4] = [-2, -1, 1, 2];

/// Binary feature names for the token at `position`. The lowercased-form
/// identity feature is only emitted for forms in `frequent_forms`.
pub fn extract_features(
    sentence: &Sentence,
    position: usize,
    frequent_forms: Option<&HashSet<String>>,
) -> Vec<String> {
    let form = sentence.tokens[position].form();
    let chars: Vec<char> = form.chars().collect();
    let lower = form.to_lowercase();
    let mut feats = vec!["bias".to_owned()];

    for n in AFFIX_LENGTHS {
        if chars.len() >= n {
            let suffix: String = chars[chars.len() - n..].iter().collect();
            let prefix: String = chars[..n].iter().collect();
            feats.push(format!("suffix:{suffix}"));
            feats.push(format!("prefix:{prefix}"));
        }
    }
    if frequent_forms.is_some_and(|set| set.contains(&lower)) {
        feats.push(format!("form:{lower}"));
    }
    for offset in NEIGHBOR_OFFSETS {
        let idx = position as isize + offset;
        let neighbor = if idx < 0 {
            "<bos>".to_owned()
        } else if idx as usize >= sentence.len() {
            "<eos>".to_owned()
        } else {
            sentence.tokens[idx as usize].form().to_lowercase()
        };
        feats.push(format!("w[{offset:+}]:{neighbor}"));
    }
    if chars.first().is_some_and(|c| c.is_uppercase()) {
        feats.push("capitalized".to_owned());
    }
    if chars.iter().all(char::is_ascii_digit) {
        feats.push("digits".to_owned());
    }
    feats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;

    fn sentence(forms: &[&str]) -> Sentence {
        Sentence::new(
            forms.iter().map(|f| Token::new(*f, f.to_lowercase()).unwrap()).collect(),
            "f",
        )
    }

    #[test]
    fn affixes_of_jaren() {
        let f = extract_features(&sentence(&["jaren"]), 0, None);
        for want in ["suffix:n", "suffix:en", "suffix:ren", "prefix:j", "prefix:ja", "prefix:jar"] {
            assert!(f.contains(&want.to_owned()), "{want}");
        }
        assert!(!f.iter().any(|x| x.starts_with("form:")));
    }

    #[test]
    fn boundaries_use_sentinels() {
        let f = extract_features(&sentence(&["De", "jaren"]), 0, None);
        assert!(f.contains(&"w[-1]:<bos>".to_owned()));
        assert!(f.contains(&"w[-2]:<bos>".to_owned()));
        assert!(f.contains(&"w[+1]:jaren".to_owned()));
        assert!(f.contains(&"w[+2]:<eos>".to_owned()));
        assert!(f.contains(&"capitalized".to_owned()));
    }

    #[test]
    fn digit_flag_and_frequent_form() {
        let frequent: HashSet<String> = ["1302".to_owned()].into();
        let f = extract_features(&sentence(&["1302"]), 0, Some(&frequent));
        assert!(f.contains(&"digits".to_owned()));
        assert!(f.contains(&"form:1302".to_owned()));
    }
}
